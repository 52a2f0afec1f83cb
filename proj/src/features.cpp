#include "streamad/features.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

namespace streamad {

namespace {

// Flattened raw patch in [0, 1], channel-last, row-major inside the patch.
Eigen::VectorXf patch_vector(const ImageU8& img, int y0, int x0, int stride) {
  Eigen::VectorXf v(stride * stride * 3);
  int k = 0;
  for (int y = y0; y < y0 + stride; ++y)
    for (int x = x0; x < x0 + stride; ++x)
      for (int c = 0; c < 3; ++c) v[k++] = img.at(y, x, c) / 255.f;
  return v;
}

}  // namespace

std::vector<PatchEmbedding> FeatureExtractor::extract(
    const ImageU8& image, const std::vector<std::string>& layer_names) const {
  std::vector<PatchEmbedding> out;
  out.reserve(layer_names.size());
  for (const auto& l : layer_names) out.push_back(extract_layer(image, l));
  return out;
}

std::vector<std::vector<PatchEmbedding>> FeatureExtractor::extract(
    const std::vector<ImageU8>& images,
    const std::vector<std::string>& layer_names) const {
  std::vector<std::vector<PatchEmbedding>> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(extract(img, layer_names));
  return out;
}

IdentityAvgPoolExtractor::IdentityAvgPoolExtractor(int stride) : stride_(stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
}

int IdentityAvgPoolExtractor::layer_dim(const std::string& layer) const {
  if (layer != "avgpool") throw std::invalid_argument("unknown layer: " + layer);
  return 3;
}

PatchEmbedding IdentityAvgPoolExtractor::extract_layer(const ImageU8& image,
                                                       const std::string& layer) const {
  if (layer != "avgpool") throw std::invalid_argument("unknown layer: " + layer);
  PatchEmbedding e;
  e.hf = image.h / stride_;
  e.wf = image.w / stride_;
  e.d = 3;
  e.stride = stride_;
  e.source_layers = {layer};
  e.grid.resize(e.hf * e.wf, 3);
  const float norm = 1.f / (255.f * stride_ * stride_);
  for (int gy = 0; gy < e.hf; ++gy) {
    for (int gx = 0; gx < e.wf; ++gx) {
      float acc[3] = {0, 0, 0};
      for (int y = gy * stride_; y < (gy + 1) * stride_; ++y)
        for (int x = gx * stride_; x < (gx + 1) * stride_; ++x)
          for (int c = 0; c < 3; ++c) acc[c] += image.at(y, x, c);
      for (int c = 0; c < 3; ++c) e.grid(gy * e.wf + gx, c) = acc[c] * norm;
    }
  }
  return e;
}

RandomProjectionExtractor::RandomProjectionExtractor(std::vector<LayerSpec> specs,
                                                     std::uint64_t seed) {
  if (specs.empty()) throw std::invalid_argument("need at least one layer spec");
  std::mt19937_64 rng(seed);
  for (auto& s : specs) {
    if (s.stride < 1 || s.dim < 1)
      throw std::invalid_argument("layer spec needs stride >= 1 and dim >= 1");
    Layer layer;
    layer.spec = s;
    const int in_dim = s.stride * s.stride * 3;
    std::normal_distribution<float> g(0.f, 1.f / std::sqrt(static_cast<float>(in_dim)));
    layer.weight.resize(s.dim, in_dim);
    for (int i = 0; i < layer.weight.rows(); ++i)
      for (int j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = g(rng);
    layers_.push_back(std::move(layer));
  }
}

std::vector<std::string> RandomProjectionExtractor::layers() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) out.push_back(l.spec.name);
  return out;
}

const RandomProjectionExtractor::Layer& RandomProjectionExtractor::find(
    const std::string& name) const {
  for (const auto& l : layers_)
    if (l.spec.name == name) return l;
  throw std::invalid_argument("unknown layer: " + name);
}

int RandomProjectionExtractor::layer_dim(const std::string& layer) const {
  return find(layer).spec.dim;
}

PatchEmbedding RandomProjectionExtractor::extract_layer(const ImageU8& image,
                                                        const std::string& name) const {
  const Layer& layer = find(name);
  const int stride = layer.spec.stride;
  PatchEmbedding e;
  e.hf = image.h / stride;
  e.wf = image.w / stride;
  e.d = layer.spec.dim;
  e.stride = stride;
  e.source_layers = {name};
  e.grid.resize(e.hf * e.wf, e.d);
  for (int gy = 0; gy < e.hf; ++gy) {
    for (int gx = 0; gx < e.wf; ++gx) {
      Eigen::VectorXf v = layer.weight * patch_vector(image, gy * stride, gx * stride, stride);
      if (layer.spec.relu) v = v.cwiseMax(0.f);
      e.grid.row(gy * e.wf + gx) = v.transpose();
    }
  }
  return e;
}

std::unique_ptr<FeatureExtractor> make_wide50_style_backbone(std::uint64_t seed) {
  std::vector<RandomProjectionExtractor::LayerSpec> specs = {
      {"layer1", 4, 256, true},
      {"layer2", 8, 512, true},
      {"layer3", 16, 1024, true},
      {"layer4", 32, 2048, true},
  };
  return std::make_unique<RandomProjectionExtractor>(std::move(specs), seed);
}

PatchEmbedding concat_multiscale(const std::vector<PatchEmbedding>& embeds) {
  if (embeds.empty()) throw std::invalid_argument("concat_multiscale: empty list");
  if (embeds.size() == 1) return embeds[0];
  int hf = 0, wf = 0, d_out = 0;
  for (const auto& e : embeds) {
    hf = std::max(hf, e.hf);
    wf = std::max(wf, e.wf);
    d_out += e.d;
  }
  PatchEmbedding out;
  out.hf = hf;
  out.wf = wf;
  out.d = d_out;
  out.stride = embeds[0].stride;
  for (const auto& e : embeds) {
    out.stride = std::min(out.stride, e.stride);
    for (const auto& l : e.source_layers) out.source_layers.push_back(l);
  }
  out.grid.resize(hf * wf, d_out);
  int col = 0;
  for (const auto& e : embeds) {
    for (int y = 0; y < hf; ++y) {
      // nearest-neighbor upsample of the coarser grid
      int sy = std::min(e.hf - 1, y * e.hf / hf);
      for (int x = 0; x < wf; ++x) {
        int sx = std::min(e.wf - 1, x * e.wf / wf);
        out.grid.block(y * wf + x, col, 1, e.d) = e.grid.row(sy * e.wf + sx);
      }
    }
    col += e.d;
  }
  return out;
}

void save_embedding(const std::string& path, const PatchEmbedding& e) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::int32_t hdr[3] = {e.hf, e.wf, e.d};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  // Eigen is column-major; emit row-major cells.
  for (int r = 0; r < e.grid.rows(); ++r)
    for (int c = 0; c < e.grid.cols(); ++c) {
      float v = e.grid(r, c);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

PatchEmbedding load_embedding(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::int32_t hdr[3];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!f || hdr[0] < 1 || hdr[1] < 1 || hdr[2] < 1)
    throw std::runtime_error("bad embedding header: " + path);
  PatchEmbedding e;
  e.hf = hdr[0];
  e.wf = hdr[1];
  e.d = hdr[2];
  e.grid.resize(e.hf * e.wf, e.d);
  for (int r = 0; r < e.grid.rows(); ++r)
    for (int c = 0; c < e.grid.cols(); ++c) {
      float v;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      e.grid(r, c) = v;
    }
  if (!f) throw std::runtime_error("truncated embedding file: " + path);
  return e;
}

}  // namespace streamad
