// Acceptance gate: one line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>

#include "metric_oracles.hpp"
#include "streamad/runner.hpp"

using namespace streamad;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion,
              what.c_str());
  if (!ok) ++failures;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Eigen::MatrixXf random_matrix(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  Eigen::MatrixXf m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  return m;
}

std::vector<PatchEmbedding> random_embeddings(int n_images, int hf, int wf, int d,
                                              std::uint64_t seed) {
  std::vector<PatchEmbedding> out;
  for (int i = 0; i < n_images; ++i) {
    PatchEmbedding e;
    e.hf = hf;
    e.wf = wf;
    e.d = d;
    e.grid = random_matrix(hf * wf, d, seed * 1000 + i);
    out.push_back(std::move(e));
  }
  return out;
}

// criterion 1: sequential merge equals the direct parameter mean
void criterion_gaussian_merge() {
  const double t0 = now_seconds();
  bool ok = true;
  std::size_t serialized = 0;
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "accept_gbank.bin").string();
  for (int T : {2, 5, 10}) {
    std::vector<GaussianBank> banks;
    for (int t = 0; t < T; ++t)
      banks.push_back(GaussianBank::fit_task(random_embeddings(5, 2, 2, 3, T * 100 + t)));
    GaussianBank merged = banks[0];
    for (int t = 1; t < T; ++t)
      merged = GaussianBank::merge_incremental(merged, banks[t]);
    double max_dev = 0;
    for (int pos = 0; pos < 4; ++pos) {
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
      for (const auto& b : banks) {
        mu += b.mean(pos);
        cov += b.covariance(pos);
      }
      mu /= T;
      cov /= T;
      max_dev = std::max(max_dev, (merged.mean(pos) - mu).cwiseAbs().maxCoeff());
      max_dev = std::max(max_dev, (merged.covariance(pos) - cov).cwiseAbs().maxCoeff());
    }
    ok &= max_dev < 1e-6;
    merged.save(path);
    const auto size = fs::file_size(path);
    if (serialized == 0) serialized = size;
    ok &= size == serialized;
  }
  fs::remove(path);
  const double dt = now_seconds() - t0;
  ok &= dt < 10.0;
  report(1, "gaussian merge oracle < 1e-6, constant serialized size, " +
                std::to_string(dt).substr(0, 4) + "s < 10s",
         ok);
}

// criterion 2: coreset capacity bound, 2x-optimal radius, subset chain
void criterion_coreset() {
  const double t0 = now_seconds();
  bool ok = true;

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int capacity = std::uniform_int_distribution<int>(10, 120)(rng);
    CoresetBank bank(capacity, 1, trial);
    const int n_tasks = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int t = 0; t < n_tasks; ++t) {
      const int n = std::uniform_int_distribution<int>(1, 150)(rng);
      bank.update_after_task(random_matrix(n, 3, trial * 10 + t), t);
      ok &= bank.total_patches() <= static_cast<std::size_t>(capacity);
    }
  }

  auto covering_radius = [](const Eigen::MatrixXf& pts, const std::vector<int>& c) {
    double worst = 0;
    for (int i = 0; i < pts.rows(); ++i) {
      double best = 1e30;
      for (int j : c) best = std::min(best, (double)(pts.row(i) - pts.row(j)).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  std::mt19937_64 rng2(2);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = std::uniform_int_distribution<int>(4, 12)(rng2);
    const int m = std::uniform_int_distribution<int>(1, n - 1)(rng2);
    auto pts = random_matrix(n, 2, 7000 + trial);
    auto idx = greedy_coreset(pts, m, trial);
    double optimal = 1e30;
    std::vector<int> subset;
    std::function<void(int)> recurse = [&](int start) {
      if (static_cast<int>(subset.size()) == m) {
        optimal = std::min(optimal, covering_radius(pts, subset));
        return;
      }
      for (int i = start; i < n; ++i) {
        subset.push_back(i);
        recurse(i + 1);
        subset.pop_back();
      }
    };
    recurse(0);
    ok &= covering_radius(pts, idx) <= 2.0 * optimal + 1e-6;
  }

  CoresetBank chain(60);
  auto as_set = [](const Eigen::MatrixXf& m) {
    std::set<std::vector<float>> s;
    for (int i = 0; i < m.rows(); ++i)
      s.insert(std::vector<float>(m.row(i).begin(), m.row(i).end()));
    return s;
  };
  chain.update_after_task(random_matrix(100, 3, 9000), 0);
  auto prev = as_set(chain.stores().at(0));
  for (int t = 1; t < 4; ++t) {
    chain.update_after_task(random_matrix(100, 3, 9000 + t), t);
    auto cur = as_set(chain.stores().at(0));
    for (const auto& v : cur) ok &= prev.count(v) == 1;
    prev = cur;
  }

  const double dt = now_seconds() - t0;
  ok &= dt < 60.0;
  report(2, "coreset capacity bound, 2x-optimal radius, subset chain, " +
                std::to_string(dt).substr(0, 4) + "s < 60s",
         ok);
}

// criterion 3: replay selection frequency and invariants
void criterion_replay() {
  const double t0 = now_seconds();
  bool ok = true;

  auto make_task = [](int n, int id) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
      Sample s;
      s.image = ImageU8(8, 8, static_cast<std::uint8_t>(id * 50 + i % 250));
      s.task_id = id;
      out.push_back(std::move(s));
    }
    return out;
  };
  ReplayBuffer buffer(100, 7);
  buffer.update_after_task(make_task(30, 0), 0);
  buffer.update_after_task(make_task(10, 1), 1);
  ok &= buffer.stores().at(0).size() == 30;
  ok &= buffer.stores().at(1).size() == 10;
  int task0 = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    if (buffer.sample_batch(1)[0].task_id == 0) ++task0;
  const double freq = static_cast<double>(task0) / draws;
  ok &= freq > 0.48 && freq < 0.52;

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int capacity = std::uniform_int_distribution<int>(5, 60)(rng);
    ReplayBuffer b(capacity, trial);
    const int n_tasks = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int t = 0; t < n_tasks; ++t) {
      const int n = std::uniform_int_distribution<int>(1, 80)(rng);
      b.update_after_task(make_task(n, t), t);
      ok &= b.total_size() <= static_cast<std::size_t>(capacity);
      const int quota_ceil = (capacity + t) / (t + 1);
      for (const auto& [id, store] : b.stores())
        ok &= store.size() <= static_cast<std::size_t>(quota_ceil);
    }
  }

  const double dt = now_seconds() - t0;
  ok &= dt < 10.0;
  report(3, "replay frequency 0.5 +- 0.02 and balance invariants, " +
                std::to_string(dt).substr(0, 4) + "s < 10s",
         ok);
}

// criterion 4: metric implementations against the brute-force oracles
void criterion_metric_oracles() {
  const double t0 = now_seconds();
  bool ok = true;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(4, 50)(rng);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      // coarse grid makes ties common
      scores[i] = std::uniform_int_distribution<int>(0, 9)(rng) / 10.0;
      labels[i] = std::bernoulli_distribution(0.4)(rng) ? 1 : 0;
      (labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    ok &= std::abs(auroc(scores, labels) - oracles::auroc_oracle(scores, labels)) < 1e-12;
    ok &= std::abs(f1_max(scores, labels).f1 - oracles::f1_oracle(scores, labels)) < 1e-12;
    ok &= std::abs(pr_auc(scores, labels) - oracles::pr_auc_oracle(scores, labels)) < 1e-12;
  }

  for (int trial = 0; trial < 50; ++trial) {
    FloatMap map(8, 8);
    MaskU8 mask(8, 8);
    bool any = false;
    for (int i = 0; i < 64; ++i) {
      map.data[i] = std::uniform_int_distribution<int>(0, 5)(rng) / 5.0f;
      mask.data[i] = std::bernoulli_distribution(0.3)(rng) ? 1 : 0;
      any |= mask.data[i] != 0;
    }
    if (!any || mask.count_nonzero() == 64) continue;
    for (double limit : {0.3, 1.0})
      ok &= std::abs(aupro({map}, {mask}, limit) -
                     oracles::aupro_oracle({map}, {mask}, limit)) < 1e-12;
  }

  const double dt = now_seconds() - t0;
  ok &= dt < 60.0;
  report(4, "auroc/f1/pr_auc within 1e-12 of enumeration, aupro exact on 8x8, " +
                std::to_string(dt).substr(0, 4) + "s < 60s",
         ok);
}

// criterion 5: memory accounting anchors
void criterion_memory_anchors() {
  const double replay_mb =
      memory_report(0, static_cast<std::size_t>(300) * 256 * 256 * 3).additional_mb;
  const double bank_mb =
      memory_report(static_cast<std::size_t>(30000) * 1536, 0).architecture_mb;
  const bool ok = std::abs(replay_mb - 59.0) < 0.1 && std::abs(bank_mb - 184.3) < 0.1;
  std::printf("        replay 300x256x256 = %.2f MB, bank 30000x1536 = %.2f MB\n",
              replay_mb, bank_mb);
  report(5, "memory anchors 59.0 and 184.3 MB within 0.1", ok);
}

// criterion 6: numerical checks
void criterion_numerics() {
  bool ok = true;

  // CFA descriptor gradient vs central finite differences
  {
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
      max_rel = std::max(max_rel,
                         std::abs(fd - analytic[p]) / std::max(1.0, std::abs(fd)));
    }
    ok &= max_rel < 1e-4;
    std::printf("        cfa gradient max rel err = %.2e\n", max_rel);
  }

  // FastFlow invertibility and identity initialization
  {
    CouplingFlow flow(8, 4, 16, 1);
    auto x = random_matrix(50, 8, 2);
    Eigen::VectorXf logdet;
    Eigen::MatrixXf z = flow.forward(x, &logdet);
    ok &= z.isApprox(x);
    ok &= logdet.cwiseAbs().maxCoeff() == 0.0f;
    for (int step = 0; step < 50; ++step) flow.train_step(x, 1e-2f);
    z = flow.forward(x);
    const float err = (flow.inverse(z) - x).cwiseAbs().maxCoeff();
    ok &= err < 1e-4f;
    std::printf("        flow reconstruction max abs err = %.2e\n", err);
  }

  report(6, "cfa gradient < 1e-4 of FD, flow inverse < 1e-4, identity log-det 0", ok);
}

ExperimentConfig desk_config(const std::string& method, Strategy strategy) {
  ExperimentConfig c;
  c.method = method;
  c.strategy = strategy;
  c.n_tasks = 3;
  c.n_train = 20;
  c.n_test = 8;
  c.image_h = c.image_w = 64;
  c.metrics = {"auroc_pixel", "f1_pixel"};
  if (strategy == Strategy::replay) c.replay_capacity = 30;
  if (method == "stfpm") {
    c.method_cfg.epochs = 40;
    c.method_cfg.lr = 5e-3f;
    c.method_cfg.stfpm_hidden = 16;
  } else {
    c.method_cfg.epochs = 20;
  }
  return c;
}

// criterion 7: finetune forgets at least 5pp more than replay
void criterion_forgetting_ordering() {
  bool ok = true;
  for (const std::string method : {"stfpm", "fastflow"}) {
    double ft = 0, rp = 0;
    for (std::uint64_t seed : {0, 1, 2}) {
      ft += average_forgetting(
          run_experiment(desk_config(method, Strategy::finetune), seed)
              .matrices.at("f1_pixel"));
      rp += average_forgetting(
          run_experiment(desk_config(method, Strategy::replay), seed)
              .matrices.at("f1_pixel"));
    }
    ft /= 3;
    rp /= 3;
    std::printf("        %s: finetune %.2f%%, replay %.2f%%, gap %.2fpp\n",
                method.c_str(), ft, rp, ft - rp);
    ok &= ft >= rp;
    ok &= ft - rp >= 5.0;
  }
  report(7, "finetune >= replay forgetting with >= 5pp gap (stfpm, fastflow)", ok);
}

// criterion 8: memory-bank stability
void criterion_bank_stability() {
  bool ok = true;
  double pc_forget = 0;
  for (std::uint64_t seed : {0, 1, 2})
    pc_forget += average_forgetting(
        run_experiment(desk_config("patchcore", Strategy::cl_bank), seed)
            .matrices.at("f1_pixel"));
  pc_forget /= 3;
  std::printf("        patchcore cl_bank forgetting = %.2f%%\n", pc_forget);
  ok &= pc_forget >= -3.0 && pc_forget <= 3.0;

  double cl = 0, ft = 0;
  for (std::uint64_t seed : {0, 1, 2}) {
    cl += average_over_tasks(
        run_experiment(desk_config("padim", Strategy::cl_bank), seed)
            .matrices.at("auroc_pixel"));
    ft += average_over_tasks(
        run_experiment(desk_config("padim", Strategy::finetune), seed)
            .matrices.at("auroc_pixel"));
  }
  std::printf("        padim pixel auroc: cl_bank %.3f vs finetune %.3f\n", cl / 3,
              ft / 3);
  ok &= cl > ft;

  report(8, "patchcore forgetting in [-3, 3]%, padim cl_bank above finetune", ok);
}

// criterion 9: every method localizes on the current task
void criterion_localization() {
  bool ok = true;
  for (const auto& method : method_names()) {
    auto rec = run_experiment(desk_config(method, Strategy::finetune), 0);
    double min_diag = 1.0;
    for (int t = 0; t < 3; ++t)
      min_diag = std::min(min_diag, rec.matrices.at("auroc_pixel").get(t, t));
    std::printf("        %s current-task pixel auroc >= %.3f\n", method.c_str(),
                min_diag);
    ok &= min_diag > 0.8;
  }
  report(9, "every method > 0.8 pixel auroc on the current task", ok);
}

}  // namespace

int main() {
  const double t0 = now_seconds();
  criterion_gaussian_merge();
  criterion_coreset();
  criterion_replay();
  criterion_metric_oracles();
  criterion_memory_anchors();
  criterion_numerics();
  criterion_forgetting_ordering();
  criterion_bank_stability();
  criterion_localization();
  const double dt = now_seconds() - t0;
  std::printf("total: %.1fs, %d failure(s)\n", dt, failures);
  if (dt > 20 * 60) {
    std::printf("[FAIL] suite exceeded the 20 minute budget\n");
    ++failures;
  }
  return failures == 0 ? 0 : 1;
}
