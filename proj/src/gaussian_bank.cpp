#include "streamad/gaussian_bank.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace streamad {

std::vector<int> random_channel_selection(int d_total, int k, std::uint64_t seed) {
  if (k < 1 || k > d_total) throw std::invalid_argument("bad channel selection size");
  std::vector<int> all(d_total);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

GaussianBank GaussianBank::fit_task(const std::vector<PatchEmbedding>& embeddings,
                                    double epsilon, std::vector<int> reduced_dims) {
  if (embeddings.size() < 2)
    throw std::invalid_argument("fit_task needs >= 2 training images");
  const PatchEmbedding& first = embeddings.front();
  for (const auto& e : embeddings)
    if (e.hf != first.hf || e.wf != first.wf || e.d != first.d)
      throw std::invalid_argument("embeddings must share grid shape");

  GaussianBank bank;
  bank.hf_ = first.hf;
  bank.wf_ = first.wf;
  bank.epsilon_ = epsilon;
  bank.tasks_merged_ = 1;
  bank.reduced_dims_ = std::move(reduced_dims);
  for (int c : bank.reduced_dims_)
    if (c < 0 || c >= first.d)
      throw std::invalid_argument("reduced_dims index out of range");
  bank.d_ = bank.reduced_dims_.empty() ? first.d
                                       : static_cast<int>(bank.reduced_dims_.size());

  const int n_pos = first.hf * first.wf;
  const int d = bank.d_;
  const double n = static_cast<double>(embeddings.size());
  bank.means_.resize(n_pos);
  bank.covariances_.resize(n_pos);

  auto cell = [&](const PatchEmbedding& e, int pos) {
    Eigen::VectorXd x(d);
    if (bank.reduced_dims_.empty())
      for (int c = 0; c < d; ++c) x[c] = e.grid(pos, c);
    else
      for (int c = 0; c < d; ++c) x[c] = e.grid(pos, bank.reduced_dims_[c]);
    return x;
  };

  for (int pos = 0; pos < n_pos; ++pos) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (const auto& e : embeddings) mu += cell(e, pos);
    mu /= n;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& e : embeddings) {
      Eigen::VectorXd delta = cell(e, pos) - mu;
      cov.noalias() += delta * delta.transpose();
    }
    cov /= (n - 1.0);
    cov.diagonal().array() += epsilon;
    bank.means_[pos] = std::move(mu);
    bank.covariances_[pos] = std::move(cov);
  }
  bank.precompute_inverses();
  return bank;
}

GaussianBank GaussianBank::merge_incremental(const GaussianBank& old_bank,
                                             const GaussianBank& new_task) {
  if (old_bank.hf_ != new_task.hf_ || old_bank.wf_ != new_task.wf_ ||
      old_bank.d_ != new_task.d_)
    throw std::invalid_argument("bank shape mismatch in merge");
  if (old_bank.epsilon_ != new_task.epsilon_)
    throw std::invalid_argument("bank epsilon mismatch in merge");
  if (old_bank.reduced_dims_ != new_task.reduced_dims_)
    throw std::invalid_argument("bank channel selection mismatch in merge");
  if (new_task.tasks_merged_ != 1)
    throw std::invalid_argument("new_task must be a single-task bank");

  GaussianBank out = old_bank;
  const double n_old = old_bank.tasks_merged_;
  const double inv = 1.0 / (n_old + 1.0);
  for (std::size_t pos = 0; pos < out.means_.size(); ++pos) {
    out.means_[pos] = (n_old * old_bank.means_[pos] + new_task.means_[pos]) * inv;
    out.covariances_[pos] =
        (n_old * old_bank.covariances_[pos] + new_task.covariances_[pos]) * inv;
  }
  out.tasks_merged_ = old_bank.tasks_merged_ + 1;
  out.precompute_inverses();
  return out;
}

void GaussianBank::precompute_inverses() {
  chol_.clear();
  chol_.reserve(covariances_.size());
  for (std::size_t pos = 0; pos < covariances_.size(); ++pos) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariances_[pos]);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("covariance not positive definite at position " +
                               std::to_string(pos));
    chol_.push_back(std::move(llt));
  }
}

FloatMap GaussianBank::score(const PatchEmbedding& embedding, int out_h, int out_w,
                             double smoothing_sigma) const {
  if (embedding.hf != hf_ || embedding.wf != wf_)
    throw std::invalid_argument("embedding grid does not match bank grid");
  const bool reduced = !reduced_dims_.empty();
  if (!reduced && embedding.d != d_)
    throw std::invalid_argument("embedding dimension does not match bank");

  FloatMap grid_map(hf_, wf_);
  Eigen::VectorXd x(d_);
  for (int pos = 0; pos < hf_ * wf_; ++pos) {
    if (reduced)
      for (int c = 0; c < d_; ++c) x[c] = embedding.grid(pos, reduced_dims_[c]);
    else
      for (int c = 0; c < d_; ++c) x[c] = embedding.grid(pos, c);
    Eigen::VectorXd delta = x - means_[pos];
    const double m2 = delta.dot(chol_[pos].solve(delta));
    if (!std::isfinite(m2) || m2 < -1e-9)
      throw std::runtime_error("non-finite Mahalanobis distance");
    grid_map.data[pos] = static_cast<float>(std::sqrt(std::max(0.0, m2)));
  }
  return gaussian_smooth(resize_bilinear(grid_map, out_h, out_w), smoothing_sigma);
}

std::size_t GaussianBank::parameter_count() const {
  return static_cast<std::size_t>(hf_) * wf_ *
         (static_cast<std::size_t>(d_) + static_cast<std::size_t>(d_) * d_);
}

std::size_t GaussianBank::serialized_byte_size() const {
  return 5 * sizeof(std::int32_t) + sizeof(double) +
         reduced_dims_.size() * sizeof(std::int32_t) +
         parameter_count() * sizeof(float);
}

void GaussianBank::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::int32_t hdr[5] = {hf_, wf_, d_, tasks_merged_,
                         static_cast<std::int32_t>(reduced_dims_.size())};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  f.write(reinterpret_cast<const char*>(&epsilon_), sizeof(epsilon_));
  for (int c : reduced_dims_) {
    std::int32_t v = c;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  auto write_f = [&](double v) {
    float fv = static_cast<float>(v);
    f.write(reinterpret_cast<const char*>(&fv), sizeof(fv));
  };
  for (const auto& mu : means_)
    for (int i = 0; i < mu.size(); ++i) write_f(mu[i]);
  for (const auto& cov : covariances_)
    for (int i = 0; i < cov.rows(); ++i)
      for (int j = 0; j < cov.cols(); ++j) write_f(cov(i, j));
}

GaussianBank GaussianBank::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::int32_t hdr[5];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  GaussianBank bank;
  bank.hf_ = hdr[0];
  bank.wf_ = hdr[1];
  bank.d_ = hdr[2];
  bank.tasks_merged_ = hdr[3];
  f.read(reinterpret_cast<char*>(&bank.epsilon_), sizeof(bank.epsilon_));
  bank.reduced_dims_.resize(hdr[4]);
  for (auto& c : bank.reduced_dims_) {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    c = v;
  }
  auto read_f = [&]() {
    float v;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return static_cast<double>(v);
  };
  const int n_pos = bank.hf_ * bank.wf_;
  bank.means_.resize(n_pos);
  bank.covariances_.resize(n_pos);
  for (auto& mu : bank.means_) {
    mu.resize(bank.d_);
    for (int i = 0; i < bank.d_; ++i) mu[i] = read_f();
  }
  for (auto& cov : bank.covariances_) {
    cov.resize(bank.d_, bank.d_);
    for (int i = 0; i < bank.d_; ++i)
      for (int j = 0; j < bank.d_; ++j) cov(i, j) = read_f();
  }
  if (!f) throw std::runtime_error("truncated bank file: " + path);
  bank.precompute_inverses();
  return bank;
}

}  // namespace streamad
