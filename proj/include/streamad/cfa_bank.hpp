#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "streamad/features.hpp"
#include "streamad/image.hpp"
#include "streamad/nn.hpp"

namespace streamad {

struct CfaConfig {
  int nearest_k = 3;
  int hard_negative_j = 3;
  float radius = 1e-5f;      // hypersphere radius
  float margin = 1e-1f;      // repulsion margin on squared distances
  float softmin_t = 1.0f;    // soft-min temperature for scoring
};

// K memorized target features of fixed size; K and d never change across
// tasks.
struct HypersphereBank {
  Eigen::MatrixXf memory;  // K x d
  int batch_updates_seen = 0;

  int k() const { return static_cast<int>(memory.rows()); }
  int d() const { return static_cast<int>(memory.cols()); }
  std::size_t byte_size() const { return static_cast<std::size_t>(memory.size()) * 4; }
};

// K centroids of the (descriptor-transformed) train patches, Lloyd k-means
// with seeded initialization from distinct patches. features: N x d, N >= K.
HypersphereBank init_bank(const Eigen::MatrixXf& features, int K, std::uint64_t seed,
                          int lloyd_iters = 20);

// Sum over entries of squared distance from each feature to its nearest entry
// (the k-means objective the initializer compresses).
double bank_objective(const HypersphereBank& bank, const Eigen::MatrixXf& features);

// Nearest-entry matching; each entry c with assigned features is updated as
// c <- (b*c + mean(assigned)) / (b+1), b = batch_updates_seen. Entries without
// assignments stay unchanged; empty batch is a no-op.
void incremental_bank_update(HypersphereBank& bank, const Eigen::MatrixXf& batch);

// CFA objective on a batch of descriptor-transformed patches z:
//   attraction: sum over the nearest_k entries of max(0, d^2(z,c) - r^2)
//   repulsion:  sum over the next hard_negative_j entries of
//               max(0, r^2 - d^2(z,c) + margin)
// averaged over patches. grad_z, when non-null, receives dL/dz.
double cfa_loss(const Eigen::MatrixXf& z, const HypersphereBank& bank,
                const CfaConfig& cfg, Eigen::MatrixXf* grad_z = nullptr);

// One Adam step of the descriptor on a raw-feature batch (rows = patches).
// Returns the batch loss; non-finite loss -> std::runtime_error.
double descriptor_train_step(nn::Mlp& descriptor, const HypersphereBank& bank,
                             const Eigen::MatrixXf& raw_features,
                             const CfaConfig& cfg, float lr);

// Soft-min over the nearest_k entry distances per grid cell:
//   s = -T * log(mean_i exp(-d_i / T)), zero when all d_i are zero.
FloatMap cfa_score(const nn::Mlp& descriptor, const HypersphereBank& bank,
                   const PatchEmbedding& embedding, int out_h, int out_w,
                   double smoothing_sigma, const CfaConfig& cfg);

void save_bank(const std::string& path, const HypersphereBank& bank);
HypersphereBank load_bank(const std::string& path);

}  // namespace streamad
