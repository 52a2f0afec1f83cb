#include "streamad/cfa_bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace streamad {

HypersphereBank init_bank(const Eigen::MatrixXf& features, int K, std::uint64_t seed,
                          int lloyd_iters) {
  const int n = static_cast<int>(features.rows());
  if (K < 1) throw std::invalid_argument("init_bank: K must be >= 1");
  if (n < K) throw std::invalid_argument("init_bank: fewer patches than K");

  // Seeded init from distinct patches.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  HypersphereBank bank;
  bank.memory.resize(K, features.cols());
  int chosen = 0;
  for (int idx : order) {
    bool dup = false;
    for (int j = 0; j < chosen && !dup; ++j)
      dup = (bank.memory.row(j) - features.row(idx)).squaredNorm() == 0.f;
    if (dup) continue;
    bank.memory.row(chosen++) = features.row(idx);
    if (chosen == K) break;
  }
  for (int idx : order) {  // not enough distinct patches: allow duplicates
    if (chosen == K) break;
    bank.memory.row(chosen++) = features.row(idx);
  }

  for (int it = 0; it < lloyd_iters; ++it) {
    Eigen::MatrixXf sums = Eigen::MatrixXf::Zero(K, features.cols());
    Eigen::VectorXf counts = Eigen::VectorXf::Zero(K);
    for (int i = 0; i < n; ++i) {
      int best;
      (bank.memory.rowwise() - features.row(i)).rowwise().squaredNorm().minCoeff(&best);
      sums.row(best) += features.row(i);
      counts[best] += 1;
    }
    bool moved = false;
    for (int j = 0; j < K; ++j) {
      if (counts[j] == 0) continue;
      Eigen::RowVectorXf c = sums.row(j) / counts[j];
      if ((c - bank.memory.row(j)).squaredNorm() > 0.f) moved = true;
      bank.memory.row(j) = c;
    }
    if (!moved) break;
  }
  return bank;
}

double bank_objective(const HypersphereBank& bank, const Eigen::MatrixXf& features) {
  double obj = 0;
  for (int i = 0; i < features.rows(); ++i)
    obj += (bank.memory.rowwise() - features.row(i)).rowwise().squaredNorm().minCoeff();
  return obj;
}

void incremental_bank_update(HypersphereBank& bank, const Eigen::MatrixXf& batch) {
  if (batch.rows() == 0) return;
  if (batch.cols() != bank.memory.cols())
    throw std::invalid_argument("bank update: dimension mismatch");
  const int K = bank.k();
  Eigen::MatrixXf sums = Eigen::MatrixXf::Zero(K, bank.d());
  Eigen::VectorXf counts = Eigen::VectorXf::Zero(K);
  for (int i = 0; i < batch.rows(); ++i) {
    int best;
    (bank.memory.rowwise() - batch.row(i)).rowwise().squaredNorm().minCoeff(&best);
    sums.row(best) += batch.row(i);
    counts[best] += 1;
  }
  const float b = static_cast<float>(bank.batch_updates_seen);
  for (int j = 0; j < K; ++j) {
    if (counts[j] == 0) continue;
    Eigen::RowVectorXf mean = sums.row(j) / counts[j];
    bank.memory.row(j) = (b * bank.memory.row(j) + mean) / (b + 1.f);
  }
  ++bank.batch_updates_seen;
}

double cfa_loss(const Eigen::MatrixXf& z, const HypersphereBank& bank,
                const CfaConfig& cfg, Eigen::MatrixXf* grad_z) {
  const int n = static_cast<int>(z.rows());
  const int K = bank.k();
  if (n == 0) return 0.0;
  if (grad_z) *grad_z = Eigen::MatrixXf::Zero(n, z.cols());
  const float r2 = cfg.radius * cfg.radius;
  const int k_att = std::min(cfg.nearest_k, K);
  const int k_rep = std::min(cfg.hard_negative_j, K - k_att);
  const float inv_n = 1.f / static_cast<float>(n);

  double loss = 0;
  std::vector<int> order(K);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXf d2 = (bank.memory.rowwise() - z.row(i)).rowwise().squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return d2[a] < d2[b]; });
    for (int k = 0; k < k_att; ++k) {
      const int c = order[k];
      const float v = d2[c] - r2;
      if (v > 0) {
        loss += inv_n * v;
        if (grad_z)
          grad_z->row(i) += inv_n * 2.f * (z.row(i) - bank.memory.row(c));
      }
    }
    for (int k = k_att; k < k_att + k_rep; ++k) {
      const int c = order[k];
      const float v = r2 - d2[c] + cfg.margin;
      if (v > 0) {
        loss += inv_n * v;
        if (grad_z)
          grad_z->row(i) -= inv_n * 2.f * (z.row(i) - bank.memory.row(c));
      }
    }
  }
  return loss;
}

double descriptor_train_step(nn::Mlp& descriptor, const HypersphereBank& bank,
                             const Eigen::MatrixXf& raw_features,
                             const CfaConfig& cfg, float lr) {
  Eigen::MatrixXf z = descriptor.forward_train(raw_features);
  Eigen::MatrixXf grad_z;
  const double loss = cfa_loss(z, bank, cfg, &grad_z);
  if (!std::isfinite(loss))
    throw std::runtime_error("CFA descriptor training diverged (non-finite loss)");
  descriptor.zero_grad();
  descriptor.backward(grad_z);
  descriptor.adam_step(lr);
  return loss;
}

FloatMap cfa_score(const nn::Mlp& descriptor, const HypersphereBank& bank,
                   const PatchEmbedding& embedding, int out_h, int out_w,
                   double smoothing_sigma, const CfaConfig& cfg) {
  if (bank.k() == 0) throw std::logic_error("cfa_score: empty bank");
  Eigen::MatrixXf z = descriptor.forward(embedding.grid);
  const int k = std::min(cfg.nearest_k, bank.k());
  FloatMap grid_map(embedding.hf, embedding.wf);
  std::vector<float> dist(bank.k());
  for (int pos = 0; pos < embedding.hf * embedding.wf; ++pos) {
    Eigen::VectorXf d2 = (bank.memory.rowwise() - z.row(pos)).rowwise().squaredNorm();
    for (int j = 0; j < bank.k(); ++j) dist[j] = std::sqrt(d2[j]);
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double acc = 0;
    for (int j = 0; j < k; ++j) acc += std::exp(-dist[j] / cfg.softmin_t);
    grid_map.data[pos] =
        static_cast<float>(-cfg.softmin_t * std::log(acc / k));
  }
  return gaussian_smooth(resize_bilinear(grid_map, out_h, out_w), smoothing_sigma);
}

void save_bank(const std::string& path, const HypersphereBank& bank) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::int32_t hdr[3] = {bank.k(), bank.d(), bank.batch_updates_seen};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (int i = 0; i < bank.memory.rows(); ++i)
    for (int j = 0; j < bank.memory.cols(); ++j) {
      float v = bank.memory(i, j);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

HypersphereBank load_bank(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::int32_t hdr[3];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  HypersphereBank bank;
  bank.batch_updates_seen = hdr[2];
  bank.memory.resize(hdr[0], hdr[1]);
  for (int i = 0; i < hdr[0]; ++i)
    for (int j = 0; j < hdr[1]; ++j) {
      float v;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      bank.memory(i, j) = v;
    }
  if (!f) throw std::runtime_error("truncated bank file: " + path);
  return bank;
}

}  // namespace streamad
