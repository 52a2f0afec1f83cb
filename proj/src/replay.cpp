#include "streamad/replay.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace streamad {

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t seed)
    : capacity_(capacity), seed_(seed), rng_(seed) {
  if (capacity <= 0) throw std::invalid_argument("replay capacity must be > 0");
}

std::size_t ReplayBuffer::total_size() const {
  std::size_t n = 0;
  for (const auto& [id, v] : stores_) n += v.size();
  return n;
}

std::size_t ReplayBuffer::memory_bytes() const {
  std::size_t n = 0;
  for (const auto& [id, v] : stores_)
    for (const auto& s : v) n += s.image.data.size();
  return n;
}

void ReplayBuffer::update_after_task(const std::vector<Sample>& task_train,
                                     int task_id) {
  if (stores_.count(task_id))
    throw std::invalid_argument("task already stored in replay buffer");

  const int n_tasks = static_cast<int>(stores_.size()) + 1;
  const int base = capacity_ / n_tasks;
  int remainder = capacity_ % n_tasks;

  // Quotas differ by at most one; earlier tasks absorb the remainder.
  auto quota_of = [&](int rank) { return base + (rank < remainder ? 1 : 0); };

  int rank = 0;
  for (auto& [id, store] : stores_) {
    const std::size_t q = static_cast<std::size_t>(quota_of(rank++));
    if (store.size() > q) {
      // seeded down-sampling without replacement from the stored images
      std::vector<std::size_t> idx(store.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng_);
      idx.resize(q);
      std::sort(idx.begin(), idx.end());
      std::vector<Sample> kept;
      kept.reserve(q);
      for (auto i : idx) kept.push_back(std::move(store[i]));
      store = std::move(kept);
    }
  }

  const std::size_t q = static_cast<std::size_t>(quota_of(rank));
  std::vector<Sample> store;
  if (task_train.size() <= q) {
    store = task_train;
  } else {
    std::vector<std::size_t> idx(task_train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng_);
    idx.resize(q);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) store.push_back(task_train[i]);
  }
  stores_.emplace(task_id, std::move(store));
}

std::vector<Sample> ReplayBuffer::sample_batch(int batch_size) {
  if (stores_.empty()) throw std::logic_error("sample_batch on empty replay buffer");
  std::vector<const std::vector<Sample>*> tasks;
  for (const auto& [id, v] : stores_)
    if (!v.empty()) tasks.push_back(&v);
  if (tasks.empty()) throw std::logic_error("all replay stores empty");

  std::uniform_int_distribution<std::size_t> pick_task(0, tasks.size() - 1);
  std::vector<Sample> out;
  out.reserve(std::max(batch_size, 0));
  for (int i = 0; i < batch_size; ++i) {
    const auto& store = *tasks[pick_task(rng_)];
    std::uniform_int_distribution<std::size_t> pick(0, store.size() - 1);
    out.push_back(store[pick(rng_)]);
  }
  return out;
}

std::vector<Sample> ReplayBuffer::mixed_batch(const std::vector<Sample>& current) {
  if (current.empty()) throw std::invalid_argument("mixed_batch: empty current batch");
  std::vector<Sample> out = current;
  if (!stores_.empty()) {
    auto replayed = sample_batch(static_cast<int>(current.size()));
    out.insert(out.end(), std::make_move_iterator(replayed.begin()),
               std::make_move_iterator(replayed.end()));
  }
  std::shuffle(out.begin(), out.end(), rng_);
  return out;
}

void ReplayBuffer::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["capacity"] = capacity_;
  manifest["seed"] = seed_;
  std::ostringstream rng_state;
  rng_state << rng_;
  manifest["rng_state"] = rng_state.str();
  nlohmann::json tasks = nlohmann::json::array();
  char buf[16];
  for (const auto& [id, store] : stores_) {
    fs::path tdir = fs::path(dir) / ("task_" + std::to_string(id));
    fs::create_directories(tdir);
    int i = 0;
    for (const auto& s : store) {
      std::snprintf(buf, sizeof(buf), "%04d.png", i++);
      save_image_rgb((tdir / buf).string(), s.image);
    }
    tasks.push_back({{"task_id", id}, {"count", store.size()}});
  }
  manifest["tasks"] = tasks;
  std::ofstream f(fs::path(dir) / "manifest.json");
  f << manifest.dump(2) << "\n";
}

ReplayBuffer ReplayBuffer::load(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("missing replay manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(f);
  ReplayBuffer buf(manifest.at("capacity").get<int>(),
                   manifest.at("seed").get<std::uint64_t>());
  std::istringstream rng_state(manifest.at("rng_state").get<std::string>());
  rng_state >> buf.rng_;
  char name[16];
  for (const auto& t : manifest.at("tasks")) {
    int id = t.at("task_id").get<int>();
    std::size_t count = t.at("count").get<std::size_t>();
    std::vector<Sample> store;
    for (std::size_t i = 0; i < count; ++i) {
      std::snprintf(name, sizeof(name), "%04zu.png", i);
      Sample s;
      s.image = load_image_rgb(
          (fs::path(dir) / ("task_" + std::to_string(id)) / name).string());
      s.label = Label::normal;
      s.task_id = id;
      s.split = Split::train;
      store.push_back(std::move(s));
    }
    buf.stores_.emplace(id, std::move(store));
  }
  return buf;
}

}  // namespace streamad
