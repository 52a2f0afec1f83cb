#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamad/cfa_bank.hpp"
#include "streamad/coreset_bank.hpp"
#include "streamad/features.hpp"
#include "streamad/flow.hpp"
#include "streamad/gaussian_bank.hpp"
#include "streamad/nn.hpp"
#include "streamad/replay.hpp"
#include "streamad/taskstream.hpp"

namespace streamad {

enum class Strategy { joint, finetune, replay, cl_bank };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

const std::vector<std::string>& method_names();
bool strategy_valid_for(const std::string& method, Strategy s);

struct AnomalyMap {
  FloatMap map;
  double image_score = 0.0;  // max over the (smoothed) map
};

// Desk-scale hyperparameters shared by all adapters. The backbone stand-in is
// seeded independently of the run seed so strategy comparisons share features.
struct MethodConfig {
  int stride = 4;
  int feat_dim = 12;
  int epochs = 25;
  int batch_size = 8;
  float lr = 2e-3f;
  double smoothing_sigma = 1.5;
  std::uint64_t backbone_seed = 77;

  int bank_capacity = 3000;  // patchcore
  int padim_reduced = 0;     // 0 keeps all channels
  double padim_epsilon = 0.01;

  int cfa_bank_k = 48;
  CfaConfig cfa;

  int flow_layers = 4;
  int flow_hidden = 32;

  int stfpm_hidden = 32;
  int stfpm_out = 16;

  int pdn_dim = 8;
  int ae_bottleneck = 6;
  double ead_q_lo = 0.9;
  double ead_q_hi = 0.995;

  float draem_opacity = 0.9f;
  bool draem_procedural_texture = true;
};

class MethodAdapter {
 public:
  virtual ~MethodAdapter() = default;
  virtual std::string name() const = 0;

  // Fresh model state; called once at stream start with the run seed.
  virtual void reset(std::uint64_t seed) = 0;

  // Strategy-specific consumption of task.train (never task.test). The runner
  // owns the replay buffer; adapters only read from it.
  virtual void train_on_task(const Task& task, Strategy strategy,
                             ReplayBuffer* replay) = 0;

  virtual AnomalyMap score(const ImageU8& image) const = 0;

  virtual std::size_t architecture_params() const = 0;  // 4 bytes each
  virtual std::size_t additional_bytes() const = 0;     // banks etc, no replay

  // task ids of the samples consumed by the last train_on_task call
  const std::vector<int>& consumed_task_ids() const { return consumed_; }

 protected:
  std::vector<int> consumed_;
};

std::unique_ptr<MethodAdapter> make_adapter(const std::string& method,
                                            const MethodConfig& cfg);

struct DraemSynthesis {
  ImageU8 image;
  MaskU8 mask;
};

// Seeded procedural defect synthesis: multi-octave value noise thresholded at
// a sampled quantile (blend area lands in [5%, 30%] of the image), blended
// with `texture` (self-shuffled patches of the input when null) at the given
// opacity. The returned mask is exactly the blend region; opacity 0 returns
// the untouched image with an empty mask.
DraemSynthesis draem_synthesize(const ImageU8& image, const ImageU8* texture,
                                float opacity, std::uint64_t seed);

class StfpmAdapter : public MethodAdapter {
 public:
  explicit StfpmAdapter(const MethodConfig& cfg);
  std::string name() const override { return "stfpm"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override { return 0; }

  const std::vector<nn::Mlp>& teachers() const { return teachers_; }
  std::vector<nn::Mlp>& students() { return students_; }
  double last_epoch_loss() const { return last_epoch_loss_; }

 private:
  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  std::vector<nn::Mlp> teachers_;  // frozen
  std::vector<nn::Mlp> students_;
  double last_epoch_loss_ = 0.0;
};

class FastflowAdapter : public MethodAdapter {
 public:
  explicit FastflowAdapter(const MethodConfig& cfg);
  std::string name() const override { return "fastflow"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override { return 0; }

  const CouplingFlow& flow() const { return flow_; }
  double last_epoch_loss() const { return last_epoch_loss_; }

 private:
  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  CouplingFlow flow_;
  double last_epoch_loss_ = 0.0;
};

class EfficientAdAdapter : public MethodAdapter {
 public:
  explicit EfficientAdAdapter(const MethodConfig& cfg);
  std::string name() const override { return "efficientad"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override;

  // normalized student-teacher and autoencoder discrepancy maps at grid size
  std::pair<FloatMap, FloatMap> component_maps(const ImageU8& image) const;
  const nn::Mlp& teacher() const { return teacher_; }
  nn::Mlp& student() { return student_; }
  nn::Mlp& autoencoder() { return ae_; }

 private:
  struct Quantiles {
    double lo = 0.0, hi = 0.0;
  };
  FloatMap raw_maps(const ImageU8& image, FloatMap* ae_map) const;
  static float normalize(float v, const Quantiles& q);

  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  nn::Mlp teacher_;  // frozen stand-in for the distilled PDN
  nn::Mlp student_;
  nn::Mlp ae_;
  Quantiles q_st_, q_ae_;
};

class DraemAdapter : public MethodAdapter {
 public:
  explicit DraemAdapter(const MethodConfig& cfg);
  std::string name() const override { return "draem"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override { return 0; }

  // reconstructed per-cell features of an image (tests probe the limit case)
  Eigen::MatrixXf reconstruct(const ImageU8& image) const;

 private:
  Eigen::MatrixXf inputs_with_positions(const ImageU8& image) const;

  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  nn::Mlp recon_;
  nn::Mlp disc_;
  std::optional<ImageU8> texture_;
  std::uint64_t synth_counter_ = 0;
  std::uint64_t seed_ = 0;
};

class PadimAdapter : public MethodAdapter {
 public:
  explicit PadimAdapter(const MethodConfig& cfg);
  std::string name() const override { return "padim"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override;

  const GaussianBank* bank() const { return bank_ ? &*bank_ : nullptr; }

 private:
  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  std::optional<GaussianBank> bank_;
};

class PatchcoreAdapter : public MethodAdapter {
 public:
  explicit PatchcoreAdapter(const MethodConfig& cfg);
  std::string name() const override { return "patchcore"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override;

  const CoresetBank* bank() const { return bank_ ? &*bank_ : nullptr; }

 private:
  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  std::optional<CoresetBank> bank_;
  std::uint64_t seed_ = 0;
};

class CfaAdapter : public MethodAdapter {
 public:
  explicit CfaAdapter(const MethodConfig& cfg);
  std::string name() const override { return "cfa"; }
  void reset(std::uint64_t seed) override;
  void train_on_task(const Task& task, Strategy strategy,
                     ReplayBuffer* replay) override;
  AnomalyMap score(const ImageU8& image) const override;
  std::size_t architecture_params() const override;
  std::size_t additional_bytes() const override;

  const HypersphereBank* bank() const { return bank_ ? &*bank_ : nullptr; }

 private:
  MethodConfig cfg_;
  std::unique_ptr<FeatureExtractor> extractor_;
  nn::Mlp descriptor_;
  std::optional<HypersphereBank> bank_;
  std::uint64_t seed_ = 0;
};

}  // namespace streamad
