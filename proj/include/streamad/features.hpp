#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "streamad/image.hpp"

namespace streamad {

// Spatial grid of d-dimensional feature vectors. Cell (y, x) lives in row
// y*wf + x of `grid`.
struct PatchEmbedding {
  int hf = 0;
  int wf = 0;
  int d = 0;
  int stride = 1;  // input pixels per grid cell
  std::vector<std::string> source_layers;
  Eigen::MatrixXf grid;  // (hf*wf) x d

  Eigen::MatrixXf::ConstRowXpr cell(int y, int x) const { return grid.row(y * wf + x); }
};

// Boundary between images and patch embeddings. Implementations must be
// deterministic in evaluation mode.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::string> layers() const = 0;
  virtual int layer_dim(const std::string& layer) const = 0;
  virtual PatchEmbedding extract_layer(const ImageU8& image,
                                       const std::string& layer) const = 0;

  // One embedding per requested layer; unknown layer -> std::invalid_argument.
  std::vector<PatchEmbedding> extract(const ImageU8& image,
                                      const std::vector<std::string>& layers) const;
  std::vector<std::vector<PatchEmbedding>> extract(
      const std::vector<ImageU8>& images, const std::vector<std::string>& layers) const;
};

// Average-pooled RGB at a fixed stride; d = 3, values in [0, 1].
class IdentityAvgPoolExtractor : public FeatureExtractor {
 public:
  explicit IdentityAvgPoolExtractor(int stride);
  std::vector<std::string> layers() const override { return {"avgpool"}; }
  int layer_dim(const std::string& layer) const override;
  PatchEmbedding extract_layer(const ImageU8& image,
                               const std::string& layer) const override;

 private:
  int stride_;
};

// Seeded random linear projection of raw non-overlapping patches. Each layer
// has its own stride and output dimension; weights are fixed at construction.
class RandomProjectionExtractor : public FeatureExtractor {
 public:
  struct LayerSpec {
    std::string name;
    int stride;
    int dim;
    bool relu = false;
  };
  RandomProjectionExtractor(std::vector<LayerSpec> specs, std::uint64_t seed);

  std::vector<std::string> layers() const override;
  int layer_dim(const std::string& layer) const override;
  PatchEmbedding extract_layer(const ImageU8& image,
                               const std::string& layer) const override;

 private:
  struct Layer {
    LayerSpec spec;
    Eigen::MatrixXf weight;  // dim x (stride*stride*3)
  };
  const Layer& find(const std::string& name) const;
  std::vector<Layer> layers_;
};

// Stage pyramid with the channel widths and strides of a wide-ResNet-50 style
// backbone: layer1..layer4 = 256/512/1024/2048 channels at strides 4/8/16/32.
std::unique_ptr<FeatureExtractor> make_wide50_style_backbone(std::uint64_t seed);

// All grids resized (nearest-neighbor) to the largest Hf x Wf, channels
// concatenated; d_out = sum of d_i.
PatchEmbedding concat_multiscale(const std::vector<PatchEmbedding>& embeds);

// Flat binary format: int32 LE header (hf, wf, d) + float32 LE row-major grid.
void save_embedding(const std::string& path, const PatchEmbedding& e);
PatchEmbedding load_embedding(const std::string& path);

}  // namespace streamad
