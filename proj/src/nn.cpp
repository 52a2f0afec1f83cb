#include "streamad/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

namespace streamad::nn {

Mlp::Mlp(std::vector<int> sizes, std::uint64_t seed, bool zero_init_last)
    : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs >= 2 sizes");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    Layer l;
    const int in = sizes_[i], out = sizes_[i + 1];
    l.w.resize(out, in);
    const bool zero = zero_init_last && i + 2 == sizes_.size();
    std::normal_distribution<float> g(0.f, std::sqrt(2.f / in));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.w(r, c) = zero ? 0.f : g(rng);
    l.b = Eigen::VectorXf::Zero(out);
    l.gw = Eigen::MatrixXf::Zero(out, in);
    l.gb = Eigen::VectorXf::Zero(out);
    l.mw = Eigen::MatrixXf::Zero(out, in);
    l.vw = Eigen::MatrixXf::Zero(out, in);
    l.mb = Eigen::VectorXf::Zero(out);
    l.vb = Eigen::VectorXf::Zero(out);
    layers_.push_back(std::move(l));
  }
}

Eigen::MatrixXf Mlp::forward(const Eigen::MatrixXf& x) const {
  Eigen::MatrixXf h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = (h * layers_[i].w.transpose()).rowwise() + layers_[i].b.transpose();
    if (i + 1 < layers_.size()) h = h.cwiseMax(0.f);
  }
  return h;
}

Eigen::MatrixXf Mlp::forward_train(const Eigen::MatrixXf& x) {
  cache_.clear();
  Eigen::MatrixXf h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache_.push_back(h);
    h = (h * layers_[i].w.transpose()).rowwise() + layers_[i].b.transpose();
    if (i + 1 < layers_.size()) h = h.cwiseMax(0.f);
  }
  return h;
}

Eigen::MatrixXf Mlp::backward(const Eigen::MatrixXf& grad_out) {
  if (cache_.size() != layers_.size())
    throw std::logic_error("backward without forward_train");
  Eigen::MatrixXf g = grad_out;
  for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
    Layer& l = layers_[i];
    const Eigen::MatrixXf& in = cache_[i];
    if (i + 1 < static_cast<int>(layers_.size())) {
      // grad through ReLU: recompute the pre-activation sign
      Eigen::MatrixXf pre = (in * l.w.transpose()).rowwise() + l.b.transpose();
      g = (pre.array() > 0.f).cast<float>() * g.array();
    }
    l.gw.noalias() += g.transpose() * in;
    l.gb += g.colwise().sum().transpose();
    if (i > 0)
      g = g * l.w;
    else
      return g * l.w;
  }
  return g;
}

void Mlp::zero_grad() {
  for (auto& l : layers_) {
    l.gw.setZero();
    l.gb.setZero();
  }
}

void Mlp::adam_step(float lr) {
  constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  ++adam_t_;
  const float c1 = 1.f - std::pow(b1, static_cast<float>(adam_t_));
  const float c2 = 1.f - std::pow(b2, static_cast<float>(adam_t_));
  for (auto& l : layers_) {
    l.mw = b1 * l.mw + (1.f - b1) * l.gw;
    l.vw = b2 * l.vw.array() + (1.f - b2) * l.gw.array().square();
    l.w.array() -= lr * (l.mw.array() / c1) / ((l.vw.array() / c2).sqrt() + eps);
    l.mb = b1 * l.mb + (1.f - b1) * l.gb;
    l.vb = b2 * l.vb.array() + (1.f - b2) * l.gb.array().square();
    l.b.array() -= lr * (l.mb.array() / c1) / ((l.vb.array() / c2).sqrt() + eps);
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

std::vector<float> Mlp::parameters() const {
  std::vector<float> p;
  p.reserve(parameter_count());
  for (const auto& l : layers_) {
    p.insert(p.end(), l.w.data(), l.w.data() + l.w.size());
    p.insert(p.end(), l.b.data(), l.b.data() + l.b.size());
  }
  return p;
}

void Mlp::set_parameters(const std::vector<float>& p) {
  if (p.size() != parameter_count())
    throw std::invalid_argument("parameter vector size mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    std::copy(p.begin() + k, p.begin() + k + l.w.size(), l.w.data());
    k += l.w.size();
    std::copy(p.begin() + k, p.begin() + k + l.b.size(), l.b.data());
    k += l.b.size();
  }
}

std::vector<float> Mlp::gradients() const {
  std::vector<float> g;
  g.reserve(parameter_count());
  for (const auto& l : layers_) {
    g.insert(g.end(), l.gw.data(), l.gw.data() + l.gw.size());
    g.insert(g.end(), l.gb.data(), l.gb.data() + l.gb.size());
  }
  return g;
}

void Mlp::save(std::ostream& out) const {
  std::int32_t n = static_cast<std::int32_t>(sizes_.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (int s : sizes_) {
    std::int32_t v = s;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  auto p = parameters();
  out.write(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(float));
}

Mlp Mlp::load(std::istream& in) {
  std::int32_t n;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n < 2) throw std::runtime_error("bad Mlp header");
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    std::int32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    s = v;
  }
  Mlp m(sizes, 0);
  std::vector<float> p(m.parameter_count());
  in.read(reinterpret_cast<char*>(p.data()), p.size() * sizeof(float));
  if (!in) throw std::runtime_error("truncated Mlp file");
  m.set_parameters(p);
  return m;
}

Eigen::MatrixXf l2_normalize_rows(const Eigen::MatrixXf& x, float eps) {
  Eigen::VectorXf norms = x.rowwise().norm().array() + eps;
  return x.array().colwise() / norms.array();
}

Eigen::MatrixXf l2_normalize_rows_backward(const Eigen::MatrixXf& x,
                                           const Eigen::MatrixXf& grad_out,
                                           float eps) {
  // d(x/||x||)/dx applied to grad_out: (g - (g.x_hat) x_hat) / ||x||
  Eigen::VectorXf norms = x.rowwise().norm().array() + eps;
  Eigen::MatrixXf x_hat = x.array().colwise() / norms.array();
  Eigen::VectorXf dot = (grad_out.array() * x_hat.array()).rowwise().sum();
  Eigen::MatrixXf g = grad_out - (x_hat.array().colwise() * dot.array()).matrix();
  return (g.array().colwise() / norms.array()).matrix();
}

}  // namespace streamad::nn
