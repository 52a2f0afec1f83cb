#include "streamad/methods.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace streamad {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::joint: return "joint";
    case Strategy::finetune: return "finetune";
    case Strategy::replay: return "replay";
    case Strategy::cl_bank: return "cl_bank";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "joint") return Strategy::joint;
  if (s == "finetune") return Strategy::finetune;
  if (s == "replay") return Strategy::replay;
  if (s == "cl_bank") return Strategy::cl_bank;
  throw std::invalid_argument("unknown strategy: " + s);
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {
      "draem", "stfpm", "efficientad", "padim", "patchcore", "cfa", "fastflow"};
  return names;
}

bool strategy_valid_for(const std::string& method, Strategy s) {
  if (std::find(method_names().begin(), method_names().end(), method) ==
      method_names().end())
    return false;
  switch (s) {
    case Strategy::joint:
    case Strategy::finetune:
      return true;
    case Strategy::replay:
      return method == "draem" || method == "stfpm" || method == "efficientad" ||
             method == "fastflow";
    case Strategy::cl_bank:
      return method == "padim" || method == "patchcore" || method == "cfa";
  }
  return false;
}

namespace {

void require_strategy(const std::string& method, Strategy s) {
  if (!strategy_valid_for(method, s))
    throw std::invalid_argument("strategy " + to_string(s) +
                                " not valid for method " + method);
}

std::vector<Sample> maybe_mixed(const std::vector<Sample>& batch, Strategy s,
                                ReplayBuffer* replay) {
  if (s == Strategy::replay && replay != nullptr && !replay->empty())
    return replay->mixed_batch(batch);
  return batch;
}

// cells of every batch image stacked row-wise
Eigen::MatrixXf stack_layer(const FeatureExtractor& ex,
                            const std::vector<Sample>& batch,
                            const std::string& layer) {
  std::vector<PatchEmbedding> embeds;
  embeds.reserve(batch.size());
  int rows = 0;
  for (const auto& s : batch) {
    embeds.push_back(ex.extract_layer(s.image, layer));
    rows += static_cast<int>(embeds.back().grid.rows());
  }
  Eigen::MatrixXf out(rows, embeds.front().d);
  int r = 0;
  for (const auto& e : embeds) {
    out.middleRows(r, e.grid.rows()) = e.grid;
    r += static_cast<int>(e.grid.rows());
  }
  return out;
}

// (x+0.5)/w, (y+0.5)/h per grid cell, row order matching PatchEmbedding::grid
Eigen::MatrixXf grid_positions(int hf, int wf) {
  Eigen::MatrixXf p(hf * wf, 2);
  for (int y = 0; y < hf; ++y)
    for (int x = 0; x < wf; ++x) {
      p(y * wf + x, 0) = (x + 0.5f) / wf;
      p(y * wf + x, 1) = (y + 0.5f) / hf;
    }
  return p;
}

Eigen::MatrixXf tile_rows(const Eigen::MatrixXf& block, int times) {
  Eigen::MatrixXf out(block.rows() * times, block.cols());
  for (int i = 0; i < times; ++i)
    out.middleRows(i * block.rows(), block.rows()) = block;
  return out;
}

FloatMap cells_to_map(const Eigen::VectorXf& values, int hf, int wf, int out_h,
                      int out_w, double sigma) {
  FloatMap grid(hf, wf);
  for (int i = 0; i < hf * wf; ++i) grid.data[i] = values(i);
  return gaussian_smooth(resize_bilinear(grid, out_h, out_w), sigma);
}

AnomalyMap finish_map(FloatMap map) {
  for (float v : map.data)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite anomaly map");
  AnomalyMap out;
  out.image_score = map.max();
  out.map = std::move(map);
  return out;
}

double quantile(std::vector<float> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(q * (v.size() - 1) + 0.5);
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

}  // namespace

// ---------------------------------------------------------------- stfpm

StfpmAdapter::StfpmAdapter(const MethodConfig& cfg) : cfg_(cfg) { reset(0); }

void StfpmAdapter::reset(std::uint64_t seed) {
  extractor_ = std::make_unique<RandomProjectionExtractor>(
      std::vector<RandomProjectionExtractor::LayerSpec>{
          {"f1", cfg_.stride, cfg_.feat_dim, true},
          {"f2", cfg_.stride * 2, cfg_.feat_dim, true}},
      cfg_.backbone_seed);
  teachers_.clear();
  students_.clear();
  for (int lvl = 0; lvl < 2; ++lvl) {
    teachers_.emplace_back(
        std::vector<int>{cfg_.feat_dim, cfg_.stfpm_hidden, cfg_.stfpm_out},
        cfg_.backbone_seed + 101 + lvl);
    students_.emplace_back(
        std::vector<int>{cfg_.feat_dim, cfg_.stfpm_hidden, cfg_.stfpm_out},
        seed * 2 + lvl + 1);
  }
  consumed_.clear();
}

void StfpmAdapter::train_on_task(const Task& task, Strategy strategy,
                                 ReplayBuffer* replay) {
  require_strategy(name(), strategy);
  consumed_.clear();
  static const std::vector<std::string> layers = {"f1", "f2"};
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    double epoch_loss = 0;
    int n_batches = 0;
    for (auto& batch :
         iter_batches(task, Split::train, cfg_.batch_size, task.index * 131 + epoch)) {
      auto mixed = maybe_mixed(batch, strategy, replay);
      for (const auto& s : mixed) consumed_.push_back(s.task_id);
      for (int lvl = 0; lvl < 2; ++lvl) {
        Eigen::MatrixXf x = stack_layer(*extractor_, mixed, layers[lvl]);
        const float n = static_cast<float>(x.rows());
        Eigen::MatrixXf t = nn::l2_normalize_rows(teachers_[lvl].forward(x));
        Eigen::MatrixXf s_raw = students_[lvl].forward_train(x);
        Eigen::MatrixXf s = nn::l2_normalize_rows(s_raw);
        Eigen::MatrixXf diff = s - t;
        const double loss = diff.squaredNorm() / n;
        if (!std::isfinite(loss)) throw std::runtime_error("stfpm: non-finite loss");
        epoch_loss += loss;
        students_[lvl].zero_grad();
        students_[lvl].backward(
            nn::l2_normalize_rows_backward(s_raw, 2.0f / n * diff));
        students_[lvl].adam_step(cfg_.lr);
      }
      ++n_batches;
    }
    last_epoch_loss_ = n_batches ? epoch_loss / n_batches : 0.0;
  }
}

AnomalyMap StfpmAdapter::score(const ImageU8& image) const {
  static const std::vector<std::string> layers = {"f1", "f2"};
  FloatMap total(image.h, image.w, 0.f);
  for (int lvl = 0; lvl < 2; ++lvl) {
    auto e = extractor_->extract_layer(image, layers[lvl]);
    Eigen::MatrixXf t = nn::l2_normalize_rows(teachers_[lvl].forward(e.grid));
    Eigen::MatrixXf s = nn::l2_normalize_rows(students_[lvl].forward(e.grid));
    Eigen::VectorXf cell = 0.5f * (s - t).rowwise().squaredNorm();
    auto m = cells_to_map(cell, e.hf, e.wf, image.h, image.w, cfg_.smoothing_sigma);
    for (std::size_t i = 0; i < total.data.size(); ++i) total.data[i] += m.data[i];
  }
  return finish_map(std::move(total));
}

std::size_t StfpmAdapter::architecture_params() const {
  std::size_t n = 0;
  for (const auto& t : teachers_) n += t.parameter_count();
  for (const auto& s : students_) n += s.parameter_count();
  n += static_cast<std::size_t>(cfg_.stride) * cfg_.stride * 3 * cfg_.feat_dim;
  n += static_cast<std::size_t>(cfg_.stride * 2) * cfg_.stride * 2 * 3 * cfg_.feat_dim;
  return n;
}

// ---------------------------------------------------------------- fastflow

FastflowAdapter::FastflowAdapter(const MethodConfig& cfg) : cfg_(cfg) { reset(0); }

void FastflowAdapter::reset(std::uint64_t seed) {
  extractor_ = std::make_unique<RandomProjectionExtractor>(
      std::vector<RandomProjectionExtractor::LayerSpec>{
          {"f1", cfg_.stride, cfg_.feat_dim, false}},
      cfg_.backbone_seed);
  flow_ = CouplingFlow(cfg_.feat_dim, cfg_.flow_layers, cfg_.flow_hidden,
                       seed * 2 + 1);
  consumed_.clear();
}

void FastflowAdapter::train_on_task(const Task& task, Strategy strategy,
                                    ReplayBuffer* replay) {
  require_strategy(name(), strategy);
  consumed_.clear();
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    double epoch_loss = 0;
    int n_batches = 0;
    for (auto& batch :
         iter_batches(task, Split::train, cfg_.batch_size, task.index * 131 + epoch)) {
      auto mixed = maybe_mixed(batch, strategy, replay);
      for (const auto& s : mixed) consumed_.push_back(s.task_id);
      Eigen::MatrixXf x = stack_layer(*extractor_, mixed, "f1");
      epoch_loss += flow_.train_step(x, cfg_.lr);
      ++n_batches;
    }
    last_epoch_loss_ = n_batches ? epoch_loss / n_batches : 0.0;
  }
}

AnomalyMap FastflowAdapter::score(const ImageU8& image) const {
  auto e = extractor_->extract_layer(image, "f1");
  Eigen::VectorXf cell = flow_.nll(e.grid);
  return finish_map(
      cells_to_map(cell, e.hf, e.wf, image.h, image.w, cfg_.smoothing_sigma));
}

std::size_t FastflowAdapter::architecture_params() const {
  return flow_.parameter_count() +
         static_cast<std::size_t>(cfg_.stride) * cfg_.stride * 3 * cfg_.feat_dim;
}

// ---------------------------------------------------------------- efficientad

EfficientAdAdapter::EfficientAdAdapter(const MethodConfig& cfg) : cfg_(cfg) {
  reset(0);
}

void EfficientAdAdapter::reset(std::uint64_t seed) {
  extractor_ = std::make_unique<RandomProjectionExtractor>(
      std::vector<RandomProjectionExtractor::LayerSpec>{
          {"f1", cfg_.stride, cfg_.feat_dim, true}},
      cfg_.backbone_seed);
  teacher_ = nn::Mlp({cfg_.feat_dim, 32, cfg_.pdn_dim}, cfg_.backbone_seed + 201);
  student_ = nn::Mlp({cfg_.feat_dim, 32, 2 * cfg_.pdn_dim}, seed * 2 + 1);
  ae_ = nn::Mlp({cfg_.feat_dim + 2, cfg_.ae_bottleneck, cfg_.pdn_dim}, seed * 2 + 2);
  q_st_ = q_ae_ = Quantiles{};
  consumed_.clear();
}

void EfficientAdAdapter::train_on_task(const Task& task, Strategy strategy,
                                       ReplayBuffer* replay) {
  require_strategy(name(), strategy);
  consumed_.clear();
  const int pd = cfg_.pdn_dim;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (auto& batch :
         iter_batches(task, Split::train, cfg_.batch_size, task.index * 131 + epoch)) {
      auto mixed = maybe_mixed(batch, strategy, replay);
      for (const auto& s : mixed) consumed_.push_back(s.task_id);
      Eigen::MatrixXf x = stack_layer(*extractor_, mixed, "f1");
      const auto e0 = extractor_->extract_layer(mixed.front().image, "f1");
      Eigen::MatrixXf pos =
          tile_rows(grid_positions(e0.hf, e0.wf), static_cast<int>(mixed.size()));
      Eigen::MatrixXf xp(x.rows(), x.cols() + 2);
      xp << x, pos;
      const float n = static_cast<float>(x.rows());

      Eigen::MatrixXf t = teacher_.forward(x);
      Eigen::MatrixXf s = student_.forward_train(x);
      Eigen::MatrixXf a = ae_.forward_train(xp);

      Eigen::MatrixXf gs(s.rows(), s.cols());
      gs.leftCols(pd) = 2.0f / n * (s.leftCols(pd) - t);
      gs.rightCols(pd) = 2.0f / n * (s.rightCols(pd) - a);
      const double loss =
          ((s.leftCols(pd) - t).squaredNorm() + (s.rightCols(pd) - a).squaredNorm() +
           (a - t).squaredNorm()) /
          n;
      if (!std::isfinite(loss))
        throw std::runtime_error("efficientad: non-finite loss");
      student_.zero_grad();
      student_.backward(gs);
      student_.adam_step(cfg_.lr);

      ae_.zero_grad();
      ae_.backward(2.0f / n * (a - t));
      ae_.adam_step(cfg_.lr);
    }
  }

  // normalization quantiles from the current task's train data
  std::vector<float> st_vals, ae_vals;
  for (const auto& s : task.train) {
    FloatMap ae_map;
    FloatMap st_map = raw_maps(s.image, &ae_map);
    st_vals.insert(st_vals.end(), st_map.data.begin(), st_map.data.end());
    ae_vals.insert(ae_vals.end(), ae_map.data.begin(), ae_map.data.end());
  }
  q_st_ = {quantile(st_vals, cfg_.ead_q_lo), quantile(st_vals, cfg_.ead_q_hi)};
  q_ae_ = {quantile(ae_vals, cfg_.ead_q_lo), quantile(ae_vals, cfg_.ead_q_hi)};
}

FloatMap EfficientAdAdapter::raw_maps(const ImageU8& image, FloatMap* ae_map) const {
  const int pd = cfg_.pdn_dim;
  auto e = extractor_->extract_layer(image, "f1");
  Eigen::MatrixXf pos = grid_positions(e.hf, e.wf);
  Eigen::MatrixXf xp(e.grid.rows(), e.grid.cols() + 2);
  xp << e.grid, pos;
  Eigen::MatrixXf t = teacher_.forward(e.grid);
  Eigen::MatrixXf s = student_.forward(e.grid);
  Eigen::MatrixXf a = ae_.forward(xp);
  FloatMap st_map(e.hf, e.wf);
  if (ae_map) *ae_map = FloatMap(e.hf, e.wf);
  for (int i = 0; i < e.grid.rows(); ++i) {
    st_map.data[i] = (s.row(i).head(pd) - t.row(i)).squaredNorm() / pd;
    if (ae_map) ae_map->data[i] = (s.row(i).tail(pd) - a.row(i)).squaredNorm() / pd;
  }
  return st_map;
}

float EfficientAdAdapter::normalize(float v, const Quantiles& q) {
  const double span = q.hi - q.lo;
  if (span < 1e-12) return static_cast<float>(v - q.lo);
  return static_cast<float>(0.1 * (v - q.lo) / span);
}

std::pair<FloatMap, FloatMap> EfficientAdAdapter::component_maps(
    const ImageU8& image) const {
  FloatMap ae_map;
  FloatMap st_map = raw_maps(image, &ae_map);
  for (auto& v : st_map.data) v = normalize(v, q_st_);
  for (auto& v : ae_map.data) v = normalize(v, q_ae_);
  return {st_map, ae_map};
}

AnomalyMap EfficientAdAdapter::score(const ImageU8& image) const {
  auto [st_map, ae_map] = component_maps(image);
  Eigen::VectorXf cell(st_map.data.size());
  for (std::size_t i = 0; i < st_map.data.size(); ++i)
    cell(i) = 0.5f * (st_map.data[i] + ae_map.data[i]);
  return finish_map(cells_to_map(cell, st_map.h, st_map.w, image.h, image.w,
                                 cfg_.smoothing_sigma));
}

std::size_t EfficientAdAdapter::architecture_params() const {
  return teacher_.parameter_count() + student_.parameter_count() +
         ae_.parameter_count() +
         static_cast<std::size_t>(cfg_.stride) * cfg_.stride * 3 * cfg_.feat_dim;
}

std::size_t EfficientAdAdapter::additional_bytes() const {
  return 4 * sizeof(double);  // stored normalization quantiles
}

// ---------------------------------------------------------------- draem

namespace {

// smooth multi-octave value noise in [0, 1]
FloatMap value_noise(int h, int w, std::mt19937_64& rng) {
  FloatMap noise(h, w, 0.f);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  float weight = 1.f;
  for (int cells : {4, 8, 16}) {
    FloatMap grid(cells, cells);
    for (auto& v : grid.data) v = u(rng);
    FloatMap up = resize_bilinear(grid, h, w);
    for (std::size_t i = 0; i < noise.data.size(); ++i)
      noise.data[i] += weight * up.data[i];
    weight *= 0.5f;
  }
  return noise;
}

ImageU8 self_shuffled_texture(const ImageU8& img, std::mt19937_64& rng) {
  const int block = std::max(4, img.h / 8);
  ImageU8 out(img.h, img.w);
  std::uniform_int_distribution<int> dy(0, std::max(0, img.h - block));
  std::uniform_int_distribution<int> dx(0, std::max(0, img.w - block));
  for (int by = 0; by < img.h; by += block)
    for (int bx = 0; bx < img.w; bx += block) {
      const int sy = dy(rng), sx = dx(rng);
      for (int y = 0; y < block && by + y < img.h; ++y)
        for (int x = 0; x < block && bx + x < img.w; ++x)
          for (int c = 0; c < 3; ++c)
            out.at(by + y, bx + x, c) =
                img.at(std::min(sy + y, img.h - 1), std::min(sx + x, img.w - 1), c);
    }
  return out;
}

}  // namespace

DraemSynthesis draem_synthesize(const ImageU8& image, const ImageU8* texture,
                                float opacity, std::uint64_t seed) {
  DraemSynthesis out;
  out.image = image;
  out.mask = MaskU8(image.h, image.w, 0);
  if (opacity <= 0.f) return out;

  std::mt19937_64 rng(seed);
  FloatMap noise = value_noise(image.h, image.w, rng);
  const double area = std::uniform_real_distribution<double>(0.07, 0.25)(rng);
  std::vector<float> sorted = noise.data;
  auto k = static_cast<std::size_t>((1.0 - area) * (sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
  const float threshold = sorted[k];

  ImageU8 tex;
  if (texture != nullptr)
    tex = (texture->h == image.h && texture->w == image.w)
              ? *texture
              : resize_bilinear(*texture, image.h, image.w);
  else
    tex = self_shuffled_texture(image, rng);

  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x)
      if (noise.at(y, x) > threshold) {
        out.mask.at(y, x) = 1;
        for (int c = 0; c < 3; ++c) {
          const float v = (1.f - opacity) * image.at(y, x, c) +
                          opacity * tex.at(y, x, c);
          out.image.at(y, x, c) =
              static_cast<std::uint8_t>(std::clamp(v + 0.5f, 0.f, 255.f));
        }
      }
  return out;
}

DraemAdapter::DraemAdapter(const MethodConfig& cfg) : cfg_(cfg) { reset(0); }

void DraemAdapter::reset(std::uint64_t seed) {
  extractor_ = std::make_unique<IdentityAvgPoolExtractor>(cfg_.stride);
  recon_ = nn::Mlp({5, 48, 3}, seed * 2 + 1);
  disc_ = nn::Mlp({8, 48, 1}, seed * 2 + 2);
  seed_ = seed;
  synth_counter_ = 0;
  texture_.reset();
  if (cfg_.draem_procedural_texture) {
    // fixed colored-noise texture as the out-of-distribution source
    std::mt19937_64 rng(cfg_.backbone_seed + 301);
    ImageU8 tex(64, 64);
    for (int c = 0; c < 3; ++c) {
      FloatMap n = value_noise(64, 64, rng);
      float lo = n.data[0], hi = n.data[0];
      for (float v : n.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          tex.at(y, x, c) = static_cast<std::uint8_t>(
              255.f * (n.at(y, x) - lo) / std::max(hi - lo, 1e-6f));
    }
    texture_ = std::move(tex);
  }
  consumed_.clear();
}

Eigen::MatrixXf DraemAdapter::inputs_with_positions(const ImageU8& image) const {
  auto e = extractor_->extract_layer(image, "avgpool");
  Eigen::MatrixXf out(e.grid.rows(), 5);
  out << e.grid, grid_positions(e.hf, e.wf);
  return out;
}

void DraemAdapter::train_on_task(const Task& task, Strategy strategy,
                                 ReplayBuffer* replay) {
  require_strategy(name(), strategy);
  consumed_.clear();
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (auto& batch :
         iter_batches(task, Split::train, cfg_.batch_size, task.index * 131 + epoch)) {
      auto mixed = maybe_mixed(batch, strategy, replay);
      for (const auto& s : mixed) consumed_.push_back(s.task_id);

      std::vector<Eigen::MatrixXf> xa_parts, tc_parts;
      std::vector<Eigen::VectorXf> y_parts;
      for (const auto& s : mixed) {
        auto synth = draem_synthesize(s.image, texture_ ? &*texture_ : nullptr,
                                      cfg_.draem_opacity,
                                      seed_ * 7919 + synth_counter_++);
        Eigen::MatrixXf xa = inputs_with_positions(synth.image);
        auto clean = extractor_->extract_layer(s.image, "avgpool");
        xa_parts.push_back(xa);
        tc_parts.push_back(clean.grid);
        // cell label: defect when the mask covers more than a quarter of it
        Eigen::VectorXf y(clean.grid.rows());
        for (int gy = 0; gy < clean.hf; ++gy)
          for (int gx = 0; gx < clean.wf; ++gx) {
            int hits = 0;
            for (int yy = gy * cfg_.stride; yy < (gy + 1) * cfg_.stride; ++yy)
              for (int xx = gx * cfg_.stride; xx < (gx + 1) * cfg_.stride; ++xx)
                hits += synth.mask.at(yy, xx);
            y(gy * clean.wf + gx) =
                hits * 4 > cfg_.stride * cfg_.stride ? 1.f : 0.f;
          }
        y_parts.push_back(y);
      }
      int rows = 0;
      for (const auto& p : xa_parts) rows += static_cast<int>(p.rows());
      Eigen::MatrixXf xa(rows, 5), tc(rows, 3);
      Eigen::VectorXf y(rows);
      int r = 0;
      for (std::size_t i = 0; i < xa_parts.size(); ++i) {
        xa.middleRows(r, xa_parts[i].rows()) = xa_parts[i];
        tc.middleRows(r, tc_parts[i].rows()) = tc_parts[i];
        y.segment(r, y_parts[i].size()) = y_parts[i];
        r += static_cast<int>(xa_parts[i].rows());
      }
      const float n = static_cast<float>(rows);

      Eigen::MatrixXf rec = recon_.forward_train(xa);
      const double loss_r = (rec - tc).squaredNorm() / n;
      if (!std::isfinite(loss_r)) throw std::runtime_error("draem: non-finite loss");
      recon_.zero_grad();
      recon_.backward(2.0f / n * (rec - tc));
      recon_.adam_step(cfg_.lr);

      Eigen::MatrixXf din(rows, 8);
      din << xa.leftCols(3), rec, xa.rightCols(2);
      Eigen::MatrixXf logits = disc_.forward_train(din);
      Eigen::VectorXf p =
          (1.0f / (1.0f + (-logits.col(0).array()).exp())).matrix();
      disc_.zero_grad();
      disc_.backward(((p - y) / n).matrix());
      disc_.adam_step(cfg_.lr);
    }
  }
}

Eigen::MatrixXf DraemAdapter::reconstruct(const ImageU8& image) const {
  return recon_.forward(inputs_with_positions(image));
}

AnomalyMap DraemAdapter::score(const ImageU8& image) const {
  auto e = extractor_->extract_layer(image, "avgpool");
  Eigen::MatrixXf xa(e.grid.rows(), 5);
  xa << e.grid, grid_positions(e.hf, e.wf);
  Eigen::MatrixXf rec = recon_.forward(xa);
  Eigen::MatrixXf din(xa.rows(), 8);
  din << xa.leftCols(3), rec, xa.rightCols(2);
  Eigen::MatrixXf logits = disc_.forward(din);
  Eigen::VectorXf p = (1.0f / (1.0f + (-logits.col(0).array()).exp())).matrix();
  return finish_map(
      cells_to_map(p, e.hf, e.wf, image.h, image.w, cfg_.smoothing_sigma));
}

std::size_t DraemAdapter::architecture_params() const {
  return recon_.parameter_count() + disc_.parameter_count();
}

// ---------------------------------------------------------------- padim

PadimAdapter::PadimAdapter(const MethodConfig& cfg) : cfg_(cfg) { reset(0); }

void PadimAdapter::reset(std::uint64_t seed) {
  (void)seed;
  extractor_ = std::make_unique<RandomProjectionExtractor>(
      std::vector<RandomProjectionExtractor::LayerSpec>{
          {"f1", cfg_.stride, cfg_.feat_dim, true}},
      cfg_.backbone_seed);
  bank_.reset();
  consumed_.clear();
}

void PadimAdapter::train_on_task(const Task& task, Strategy strategy,
                                 ReplayBuffer* replay) {
  (void)replay;
  require_strategy(name(), strategy);
  consumed_.clear();
  std::vector<PatchEmbedding> embeds;
  for (const auto& s : task.train) {
    embeds.push_back(extractor_->extract_layer(s.image, "f1"));
    consumed_.push_back(s.task_id);
  }
  std::vector<int> dims;
  if (cfg_.padim_reduced > 0)
    dims = random_channel_selection(cfg_.feat_dim, cfg_.padim_reduced,
                                    cfg_.backbone_seed + 401);
  GaussianBank fit = GaussianBank::fit_task(embeds, cfg_.padim_epsilon, dims);
  if (strategy == Strategy::cl_bank && bank_)
    bank_ = GaussianBank::merge_incremental(*bank_, fit);
  else
    bank_ = std::move(fit);
}

AnomalyMap PadimAdapter::score(const ImageU8& image) const {
  if (!bank_) throw std::logic_error("padim: not trained");
  auto e = extractor_->extract_layer(image, "f1");
  return finish_map(bank_->score(e, image.h, image.w, cfg_.smoothing_sigma));
}

std::size_t PadimAdapter::architecture_params() const {
  return static_cast<std::size_t>(cfg_.stride) * cfg_.stride * 3 * cfg_.feat_dim;
}

std::size_t PadimAdapter::additional_bytes() const {
  return bank_ ? bank_->parameter_count() * 4 : 0;
}

// ---------------------------------------------------------------- patchcore

PatchcoreAdapter::PatchcoreAdapter(const MethodConfig& cfg) : cfg_(cfg) {
  reset(0);
}

void PatchcoreAdapter::reset(std::uint64_t seed) {
  extractor_ = std::make_unique<RandomProjectionExtractor>(
      std::vector<RandomProjectionExtractor::LayerSpec>{
          {"f1", cfg_.stride, cfg_.feat_dim, true}},
      cfg_.backbone_seed);
  bank_.reset();
  seed_ = seed;
  consumed_.clear();
}

void PatchcoreAdapter::train_on_task(const Task& task, Strategy strategy,
                                     ReplayBuffer* replay) {
  (void)replay;
  require_strategy(name(), strategy);
  consumed_.clear();
  Eigen::MatrixXf patches = [&] {
    std::vector<Sample> all = task.train;
    for (const auto& s : all) consumed_.push_back(s.task_id);
    return stack_layer(*extractor_, all, "f1");
  }();
  if (strategy != Strategy::cl_bank || !bank_)
    bank_.emplace(cfg_.bank_capacity, 1, seed_ + 1, 0);
  bank_->update_after_task(patches, task.index);
}

AnomalyMap PatchcoreAdapter::score(const ImageU8& image) const {
  if (!bank_) throw std::logic_error("patchcore: not trained");
  auto e = extractor_->extract_layer(image, "f1");
  return finish_map(bank_->score(e, image.h, image.w, cfg_.smoothing_sigma));
}

std::size_t PatchcoreAdapter::architecture_params() const {
  return static_cast<std::size_t>(cfg_.stride) * cfg_.stride * 3 * cfg_.feat_dim;
}

std::size_t PatchcoreAdapter::additional_bytes() const {
  return bank_ ? bank_->memory_bytes() : 0;
}

// ---------------------------------------------------------------- cfa

CfaAdapter::CfaAdapter(const MethodConfig& cfg) : cfg_(cfg) { reset(0); }

void CfaAdapter::reset(std::uint64_t seed) {
  extractor_ = std::make_unique<RandomProjectionExtractor>(
      std::vector<RandomProjectionExtractor::LayerSpec>{
          {"f1", cfg_.stride, cfg_.feat_dim, true}},
      cfg_.backbone_seed);
  descriptor_ = nn::Mlp({cfg_.feat_dim, 32, cfg_.feat_dim}, seed * 2 + 1);
  bank_.reset();
  seed_ = seed;
  consumed_.clear();
}

void CfaAdapter::train_on_task(const Task& task, Strategy strategy,
                               ReplayBuffer* replay) {
  require_strategy(name(), strategy);
  consumed_.clear();
  Eigen::MatrixXf raw = stack_layer(*extractor_, task.train, "f1");

  // bank first, with the descriptor as it stands before this task
  if (strategy != Strategy::cl_bank || !bank_) {
    const int k = std::min<int>(cfg_.cfa_bank_k, static_cast<int>(raw.rows()));
    bank_ = init_bank(descriptor_.forward(raw), k, seed_ + task.index + 1);
  } else {
    bank_->batch_updates_seen = 0;
    const int chunk = 256;
    for (int r = 0; r < raw.rows(); r += chunk) {
      const int n = std::min<int>(chunk, static_cast<int>(raw.rows()) - r);
      incremental_bank_update(*bank_, descriptor_.forward(raw.middleRows(r, n)));
    }
  }

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (auto& batch :
         iter_batches(task, Split::train, cfg_.batch_size, task.index * 131 + epoch)) {
      std::vector<Sample> mixed = batch;
      if (strategy == Strategy::cl_bank && replay != nullptr && !replay->empty())
        mixed = replay->mixed_batch(batch);
      for (const auto& s : mixed) consumed_.push_back(s.task_id);
      Eigen::MatrixXf x = stack_layer(*extractor_, mixed, "f1");
      descriptor_train_step(descriptor_, *bank_, x, cfg_.cfa, cfg_.lr);
    }
  }
}

AnomalyMap CfaAdapter::score(const ImageU8& image) const {
  if (!bank_) throw std::logic_error("cfa: not trained");
  auto e = extractor_->extract_layer(image, "f1");
  return finish_map(cfa_score(descriptor_, *bank_, e, image.h, image.w,
                              cfg_.smoothing_sigma, cfg_.cfa));
}

std::size_t CfaAdapter::architecture_params() const {
  return descriptor_.parameter_count() +
         static_cast<std::size_t>(cfg_.stride) * cfg_.stride * 3 * cfg_.feat_dim;
}

std::size_t CfaAdapter::additional_bytes() const {
  return bank_ ? bank_->byte_size() : 0;
}

// ---------------------------------------------------------------- factory

std::unique_ptr<MethodAdapter> make_adapter(const std::string& method,
                                            const MethodConfig& cfg) {
  if (method == "stfpm") return std::make_unique<StfpmAdapter>(cfg);
  if (method == "fastflow") return std::make_unique<FastflowAdapter>(cfg);
  if (method == "efficientad") return std::make_unique<EfficientAdAdapter>(cfg);
  if (method == "draem") return std::make_unique<DraemAdapter>(cfg);
  if (method == "padim") return std::make_unique<PadimAdapter>(cfg);
  if (method == "patchcore") return std::make_unique<PatchcoreAdapter>(cfg);
  if (method == "cfa") return std::make_unique<CfaAdapter>(cfg);
  throw std::invalid_argument("unknown method: " + method);
}

}  // namespace streamad
