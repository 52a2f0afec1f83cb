#include "streamad/coreset_bank.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace streamad {

std::vector<int> greedy_coreset(const Eigen::MatrixXf& patches, int m,
                                std::uint64_t seed, int proj_dim) {
  const int n = static_cast<int>(patches.rows());
  if (n == 0) throw std::invalid_argument("greedy_coreset: empty patch list");
  if (m < 1) throw std::invalid_argument("greedy_coreset: m must be >= 1");
  if (m >= n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  Eigen::MatrixXf pts;
  if (proj_dim > 0 && proj_dim < patches.cols()) {
    std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
    std::normal_distribution<float> g(0.f, 1.f / std::sqrt(static_cast<float>(proj_dim)));
    Eigen::MatrixXf proj(patches.cols(), proj_dim);
    for (int i = 0; i < proj.rows(); ++i)
      for (int j = 0; j < proj.cols(); ++j) proj(i, j) = g(rng);
    pts = patches * proj;
  } else {
    pts = patches;
  }

  std::mt19937_64 rng(seed);
  int current = static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
  std::vector<int> selected = {current};
  Eigen::VectorXf min_dist2 =
      (pts.rowwise() - pts.row(current)).rowwise().squaredNorm();

  while (static_cast<int>(selected.size()) < m) {
    int best = 0;
    float best_d = -1.f;
    for (int i = 0; i < n; ++i) {
      if (min_dist2[i] > best_d) {
        best_d = min_dist2[i];
        best = i;
      }
    }
    selected.push_back(best);
    Eigen::VectorXf d2 = (pts.rowwise() - pts.row(best)).rowwise().squaredNorm();
    min_dist2 = min_dist2.cwiseMin(d2);
  }
  return selected;
}

CoresetBank::CoresetBank(int capacity, int neighbor_k, std::uint64_t seed,
                         int proj_dim)
    : capacity_(capacity), neighbor_k_(neighbor_k), seed_(seed), proj_dim_(proj_dim) {
  if (capacity < 1) throw std::invalid_argument("coreset capacity must be >= 1");
}

std::size_t CoresetBank::total_patches() const {
  std::size_t n = 0;
  for (const auto& [id, s] : stores_) n += s.rows();
  return n;
}

std::size_t CoresetBank::memory_bytes() const {
  std::size_t n = 0;
  for (const auto& [id, s] : stores_) n += static_cast<std::size_t>(s.size()) * 4;
  return n;
}

void CoresetBank::update_after_task(const Eigen::MatrixXf& task_patches, int task_id) {
  if (stores_.count(task_id))
    throw std::invalid_argument("task already stored in coreset bank");
  if (task_patches.rows() == 0)
    throw std::invalid_argument("task has no patches");
  if (d_ == 0) d_ = static_cast<int>(task_patches.cols());
  if (task_patches.cols() != d_)
    throw std::invalid_argument("patch dimension mismatch");

  const int n_tasks = static_cast<int>(stores_.size()) + 1;
  const int m = capacity_ / n_tasks;
  if (m < 1) throw std::invalid_argument("coreset quota is zero: too many tasks");

  // Re-reduce old stores from their current contents.
  for (auto& [id, store] : stores_) {
    if (store.rows() <= m) continue;
    auto idx = greedy_coreset(store, m, seed_ + static_cast<std::uint64_t>(id),
                              proj_dim_);
    Eigen::MatrixXf reduced(idx.size(), d_);
    for (std::size_t i = 0; i < idx.size(); ++i) reduced.row(i) = store.row(idx[i]);
    store = std::move(reduced);
  }

  auto idx = greedy_coreset(task_patches, m,
                            seed_ + static_cast<std::uint64_t>(task_id), proj_dim_);
  Eigen::MatrixXf store(idx.size(), d_);
  for (std::size_t i = 0; i < idx.size(); ++i) store.row(i) = task_patches.row(idx[i]);
  stores_.emplace(task_id, std::move(store));
}

float CoresetBank::nearest_distance(const Eigen::VectorXf& query) const {
  if (stores_.empty()) throw std::logic_error("coreset bank is empty");
  float best = std::numeric_limits<float>::max();
  for (const auto& [id, store] : stores_) {
    const float d2 =
        (store.rowwise() - query.transpose()).rowwise().squaredNorm().minCoeff();
    best = std::min(best, d2);
  }
  return std::sqrt(best);
}

FloatMap CoresetBank::score(const PatchEmbedding& embedding, int out_h, int out_w,
                            double smoothing_sigma) const {
  if (stores_.empty()) throw std::logic_error("coreset bank is empty");
  if (embedding.d != d_)
    throw std::invalid_argument("embedding dimension does not match bank");
  FloatMap grid_map(embedding.hf, embedding.wf);
  for (int pos = 0; pos < embedding.hf * embedding.wf; ++pos) {
    Eigen::VectorXf q = embedding.grid.row(pos).transpose();
    grid_map.data[pos] = nearest_distance(q);
  }
  return gaussian_smooth(resize_bilinear(grid_map, out_h, out_w), smoothing_sigma);
}

void CoresetBank::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["capacity"] = capacity_;
  manifest["neighbor_k"] = neighbor_k_;
  manifest["seed"] = seed_;
  manifest["proj_dim"] = proj_dim_;
  manifest["d"] = d_;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, store] : stores_) {
    const std::string name = "task_" + std::to_string(id) + ".bin";
    PatchEmbedding e;
    e.hf = static_cast<int>(store.rows());
    e.wf = 1;
    e.d = d_;
    e.grid = store;
    save_embedding((fs::path(dir) / name).string(), e);
    tasks.push_back({{"task_id", id}, {"file", name}});
  }
  manifest["tasks"] = tasks;
  std::ofstream f(fs::path(dir) / "manifest.json");
  f << manifest.dump(2) << "\n";
}

CoresetBank CoresetBank::load(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("missing coreset manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(f);
  CoresetBank bank(manifest.at("capacity").get<int>(),
                   manifest.at("neighbor_k").get<int>(),
                   manifest.at("seed").get<std::uint64_t>(),
                   manifest.at("proj_dim").get<int>());
  bank.d_ = manifest.at("d").get<int>();
  for (const auto& t : manifest.at("tasks")) {
    auto e = load_embedding(
        (fs::path(dir) / t.at("file").get<std::string>()).string());
    bank.stores_.emplace(t.at("task_id").get<int>(), e.grid);
  }
  return bank;
}

}  // namespace streamad
