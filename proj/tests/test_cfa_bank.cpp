#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "streamad/cfa_bank.hpp"

using namespace streamad;

namespace {
Eigen::MatrixXf random_features(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  Eigen::MatrixXf m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  return m;
}
}  // namespace

TEST_CASE("init_bank with K distinct patches keeps the patch set") {
  Eigen::MatrixXf pts(4, 2);
  pts << 0, 0, 1, 0, 0, 1, 5, 5;
  auto bank = init_bank(pts, 4, 0);
  std::set<std::pair<float, float>> want, got;
  for (int i = 0; i < 4; ++i) {
    want.insert({pts(i, 0), pts(i, 1)});
    got.insert({bank.memory(i, 0), bank.memory(i, 1)});
  }
  CHECK(want == got);
  CHECK(bank.batch_updates_seen == 0);
}

TEST_CASE("init_bank with K=1 yields the global mean") {
  auto pts = random_features(20, 3, 1);
  auto bank = init_bank(pts, 1, 0);
  Eigen::RowVectorXf mean = pts.colwise().mean();
  CHECK((bank.memory.row(0) - mean).norm() < 1e-5);
}

TEST_CASE("centroid objective no worse than seeded random selection") {
  auto pts = random_features(200, 4, 2);
  const int K = 12;
  auto bank = init_bank(pts, K, 3);

  std::mt19937_64 rng(3);
  std::vector<int> idx(200);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  HypersphereBank random_bank;
  random_bank.memory.resize(K, 4);
  for (int j = 0; j < K; ++j) random_bank.memory.row(j) = pts.row(idx[j]);

  CHECK(bank_objective(bank, pts) <= bank_objective(random_bank, pts) + 1e-6);
}

TEST_CASE("init_bank requires enough patches") {
  CHECK_THROWS(init_bank(random_features(3, 2, 0), 5, 0));
}

TEST_CASE("incremental update: batch equal to memory entries is a no-op") {
  auto pts = random_features(6, 3, 4);
  auto bank = init_bank(pts, 6, 0);
  Eigen::MatrixXf before = bank.memory;
  incremental_bank_update(bank, before);
  CHECK(bank.memory.isApprox(before, 1e-6f));
  CHECK(bank.batch_updates_seen == 1);
}

TEST_CASE("incremental update: first batch overwrites (b=0)") {
  HypersphereBank bank;
  bank.memory = Eigen::MatrixXf::Zero(1, 1);
  Eigen::MatrixXf batch = Eigen::MatrixXf::Constant(3, 1, 2.f);
  incremental_bank_update(bank, batch);
  CHECK(bank.memory(0, 0) == doctest::Approx(2.0));
  CHECK(bank.batch_updates_seen == 1);
}

TEST_CASE("empty batch is a no-op") {
  auto bank = init_bank(random_features(5, 2, 5), 3, 0);
  Eigen::MatrixXf before = bank.memory;
  incremental_bank_update(bank, Eigen::MatrixXf(0, 2));
  CHECK(bank.memory.isApprox(before));
  CHECK(bank.batch_updates_seen == 0);
}

TEST_CASE("update never changes K or d; serialized size constant across tasks") {
  namespace fs = std::filesystem;
  auto bank = init_bank(random_features(50, 4, 6), 8, 0);
  auto path = (fs::temp_directory_path() / "streamad_hsbank.bin").string();
  save_bank(path, bank);
  const auto size0 = fs::file_size(path);
  for (int t = 0; t < 4; ++t) {
    incremental_bank_update(bank, random_features(30, 4, 10 + t));
    CHECK(bank.k() == 8);
    CHECK(bank.d() == 4);
    save_bank(path, bank);
    CHECK(fs::file_size(path) == size0);
  }
  fs::remove(path);
}

TEST_CASE("convergence toward cluster means on 2-cluster data") {
  // two well-separated 2-D clusters; entries drift toward the cluster means
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g(0.f, 0.1f);
  auto draw_batch = [&](int n) {
    Eigen::MatrixXf b(n, 2);
    for (int i = 0; i < n; ++i) {
      const bool left = i % 2 == 0;
      b(i, 0) = (left ? -2.f : 2.f) + g(rng);
      b(i, 1) = g(rng);
    }
    return b;
  };
  HypersphereBank bank;
  bank.memory.resize(2, 2);
  bank.memory << -1.f, 0.5f, 1.f, -0.5f;

  auto dist_to_means = [&]() {
    Eigen::RowVector2f m1(-2.f, 0.f), m2(2.f, 0.f);
    double d = 0;
    for (int j = 0; j < 2; ++j)
      d += std::min((bank.memory.row(j) - m1).norm(), (bank.memory.row(j) - m2).norm());
    return d;
  };
  double prev = dist_to_means();
  for (int epoch = 0; epoch < 5; ++epoch) {
    for (int b = 0; b < 10; ++b) incremental_bank_update(bank, draw_batch(40));
    const double now = dist_to_means();
    CHECK(now <= prev + 1e-3);
    prev = now;
  }
  CHECK(prev < 0.2);
}

TEST_CASE("cfa loss: patches on memory entries inside radius have zero attraction") {
  CfaConfig cfg;
  cfg.nearest_k = 1;
  cfg.hard_negative_j = 0;
  cfg.radius = 0.5f;
  auto bank = init_bank(random_features(4, 3, 8), 4, 0);
  Eigen::MatrixXf z = bank.memory;
  CHECK(cfa_loss(z, bank, cfg) == doctest::Approx(0.0));
}

TEST_CASE("cfa loss gradient matches central finite differences") {
  // piecewise-quadratic objective: central differences are exact up to float
  // rounding away from hinge boundaries
  CfaConfig cfg;
  cfg.nearest_k = 1;
  cfg.hard_negative_j = 1;
  cfg.radius = 0.3f;
  cfg.margin = 0.5f;

  HypersphereBank bank;
  bank.memory.resize(2, 2);
  bank.memory << 0.f, 0.f, 2.f, 1.f;

  nn::Mlp descriptor({2, 2}, 11);
  Eigen::MatrixXf raw(3, 2);
  raw << 0.7f, -0.4f, 1.3f, 0.9f, -0.6f, 0.5f;

  Eigen::MatrixXf z = descriptor.forward_train(raw);
  Eigen::MatrixXf grad_z;
  cfa_loss(z, bank, cfg, &grad_z);
  descriptor.zero_grad();
  descriptor.backward(grad_z);
  auto analytic = descriptor.gradients();

  auto params = descriptor.parameters();
  const float h = 0.02f;
  double max_rel = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto plus = params, minus = params;
    plus[p] += h;
    minus[p] -= h;
    descriptor.set_parameters(plus);
    const double lp = cfa_loss(descriptor.forward(raw), bank, cfg);
    descriptor.set_parameters(minus);
    const double lm = cfa_loss(descriptor.forward(raw), bank, cfg);
    descriptor.set_parameters(params);
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max(1.0, std::abs(fd));
    max_rel = std::max(max_rel, std::abs(fd - analytic[p]) / denom);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("descriptor training reduces the objective on synthetic data") {
  auto raw = random_features(300, 4, 9);
  nn::Mlp descriptor({4, 4}, 12);
  auto z0 = descriptor.forward(raw);
  auto bank = init_bank(z0, 10, 0);

  CfaConfig cfg;
  cfg.radius = 0.1f;
  double first_epoch = 0, last_epoch = 0;
  for (int epoch = 0; epoch < 8; ++epoch) {
    double total = 0;
    for (int b = 0; b < 10; ++b)
      total += descriptor_train_step(descriptor, bank, raw.middleRows(30 * b, 30),
                                     cfg, 1e-3f);
    if (epoch == 0) first_epoch = total;
    last_epoch = total;
  }
  CHECK(last_epoch < first_epoch);
}

TEST_CASE("score: transformed patch on a memory entry scores zero") {
  CfaConfig cfg;
  cfg.nearest_k = 1;
  HypersphereBank bank;
  bank.memory.resize(1, 2);
  bank.memory << 0.25f, -0.75f;

  nn::Mlp identity({2, 2}, 0);
  identity.set_parameters({1.f, 0.f, 0.f, 1.f, 0.f, 0.f});  // W = I, b = 0

  PatchEmbedding e;
  e.hf = 1;
  e.wf = 2;
  e.d = 2;
  e.grid.resize(2, 2);
  e.grid << 0.25f, -0.75f, 3.25f, 3.25f;
  auto map = e.grid.rows() ? cfa_score(identity, bank, e, 1, 2, 0.0, cfg) : FloatMap();
  CHECK(map.data[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(map.data[1] == doctest::Approx((e.grid.row(1) - bank.memory.row(0)).norm())
                           .epsilon(1e-5));
  for (float v : map.data) CHECK(v >= 0.f);
}

TEST_CASE("soft-min scores match brute-force nearest-entry computation") {
  CfaConfig cfg;
  cfg.nearest_k = 3;
  cfg.softmin_t = 0.7f;
  auto bank = init_bank(random_features(500, 3, 13), 200, 0);
  nn::Mlp descriptor({3, 3}, 14);

  PatchEmbedding e;
  e.hf = 3;
  e.wf = 3;
  e.d = 3;
  e.grid = random_features(9, 3, 15);
  auto map = cfa_score(descriptor, bank, e, 3, 3, 0.0, cfg);

  Eigen::MatrixXf z = descriptor.forward(e.grid);
  for (int pos = 0; pos < 9; ++pos) {
    std::vector<double> d;
    for (int j = 0; j < bank.k(); ++j)
      d.push_back((bank.memory.row(j) - z.row(pos)).norm());
    std::sort(d.begin(), d.end());
    double acc = 0;
    for (int j = 0; j < 3; ++j) acc += std::exp(-d[j] / cfg.softmin_t);
    const double want = -cfg.softmin_t * std::log(acc / 3);
    CHECK(map.data[pos] == doctest::Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("bank checkpoint round trip") {
  namespace fs = std::filesystem;
  auto bank = init_bank(random_features(30, 3, 16), 5, 0);
  bank.batch_updates_seen = 7;
  auto path = (fs::temp_directory_path() / "streamad_hsbank2.bin").string();
  save_bank(path, bank);
  auto loaded = load_bank(path);
  CHECK(loaded.batch_updates_seen == 7);
  CHECK(loaded.memory.isApprox(bank.memory));
  fs::remove(path);
}
