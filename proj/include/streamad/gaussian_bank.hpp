#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "streamad/features.hpp"
#include "streamad/image.hpp"

namespace streamad {

// Per-patch-position multivariate Gaussians with a constant-memory continual
// update: parameters of the task banks are averaged directly.
class GaussianBank {
 public:
  // Sample mean and covariance (n-1 denominator) per grid position, +epsilon*I
  // on the diagonal. Needs >= 2 images. reduced_dims, when given, selects the
  // channel subset used for all tasks.
  static GaussianBank fit_task(const std::vector<PatchEmbedding>& embeddings,
                               double epsilon = 0.01,
                               std::vector<int> reduced_dims = {});

  // mu' = (N*mu_old + mu_new)/(N+1), same for Sigma; tasks_merged' = N+1.
  // new_task must be a single-task bank of identical shape.
  static GaussianBank merge_incremental(const GaussianBank& old_bank,
                                        const GaussianBank& new_task);

  // Mahalanobis distance per position, bilinearly upsampled to output size,
  // then Gaussian-smoothed. Image score = max over the smoothed map.
  FloatMap score(const PatchEmbedding& embedding, int out_h, int out_w,
                 double smoothing_sigma) const;

  int hf() const { return hf_; }
  int wf() const { return wf_; }
  int d() const { return d_; }
  double epsilon() const { return epsilon_; }
  int tasks_merged() const { return tasks_merged_; }
  const std::vector<int>& reduced_dims() const { return reduced_dims_; }
  const Eigen::VectorXd& mean(int pos) const { return means_[pos]; }
  const Eigen::MatrixXd& covariance(int pos) const { return covariances_[pos]; }

  // Parameter count (means + covariances); memory accounting uses 4 bytes per
  // parameter.
  std::size_t parameter_count() const;

  // Checkpoint: header (hf, wf, d, epsilon, N, reduced dims) + flat float32
  // arrays. serialized_byte_size is independent of tasks_merged.
  void save(const std::string& path) const;
  static GaussianBank load(const std::string& path);
  std::size_t serialized_byte_size() const;

 private:
  void precompute_inverses();

  int hf_ = 0, wf_ = 0, d_ = 0;
  double epsilon_ = 0.01;
  int tasks_merged_ = 0;
  std::vector<int> reduced_dims_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;  // epsilon*I included
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
};

// Seeded selection of k distinct channel indices out of d_total.
std::vector<int> random_channel_selection(int d_total, int k, std::uint64_t seed);

}  // namespace streamad
