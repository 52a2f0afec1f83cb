#include "streamad/flow.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace streamad {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

CouplingFlow::CouplingFlow(int dim, int n_layers, int hidden, std::uint64_t seed)
    : dim_(dim), half_(dim / 2) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("flow dim must be even, >= 2");
  if (n_layers < 1) throw std::invalid_argument("flow needs >= 1 layer");
  subnets_.reserve(n_layers);
  for (int i = 0; i < n_layers; ++i)
    subnets_.emplace_back(std::vector<int>{half_, hidden, 2 * half_}, seed + i,
                          /*zero_init_last=*/true);
}

Eigen::MatrixXf CouplingFlow::forward(const Eigen::MatrixXf& x,
                                      Eigen::VectorXf* logdet) const {
  if (x.cols() != dim_) throw std::invalid_argument("flow input dim mismatch");
  Eigen::MatrixXf z = x;
  if (logdet) logdet->setZero(x.rows());
  for (std::size_t i = 0; i < subnets_.size(); ++i) {
    const int a0 = (i % 2 == 0) ? 0 : half_;       // fixed half offset
    const int b0 = (i % 2 == 0) ? half_ : 0;       // transformed half offset
    Eigen::MatrixXf st = subnets_[i].forward(z.middleCols(a0, half_));
    Eigen::ArrayXXf s =
        s_clamp_ * (st.leftCols(half_).array() / s_clamp_).tanh();
    z.middleCols(b0, half_) =
        (z.middleCols(b0, half_).array() * s.exp() + st.rightCols(half_).array())
            .matrix();
    if (logdet) *logdet += s.rowwise().sum().matrix();
  }
  return z;
}

Eigen::MatrixXf CouplingFlow::inverse(const Eigen::MatrixXf& z) const {
  if (z.cols() != dim_) throw std::invalid_argument("flow input dim mismatch");
  Eigen::MatrixXf x = z;
  for (int i = static_cast<int>(subnets_.size()) - 1; i >= 0; --i) {
    const int a0 = (i % 2 == 0) ? 0 : half_;
    const int b0 = (i % 2 == 0) ? half_ : 0;
    Eigen::MatrixXf st = subnets_[i].forward(x.middleCols(a0, half_));
    Eigen::ArrayXXf s =
        s_clamp_ * (st.leftCols(half_).array() / s_clamp_).tanh();
    x.middleCols(b0, half_) =
        ((x.middleCols(b0, half_).array() - st.rightCols(half_).array()) *
         (-s).exp())
            .matrix();
  }
  return x;
}

Eigen::VectorXf CouplingFlow::nll(const Eigen::MatrixXf& x) const {
  Eigen::VectorXf logdet;
  Eigen::MatrixXf z = forward(x, &logdet);
  Eigen::VectorXf out(x.rows());
  for (int i = 0; i < x.rows(); ++i)
    out(i) = 0.5f * z.row(i).squaredNorm() +
             0.5f * static_cast<float>(dim_ * kLog2Pi) - logdet(i);
  return out;
}

double CouplingFlow::train_step(const Eigen::MatrixXf& x, float lr) {
  const double loss = nll_gradient(x, nullptr);
  for (auto& net : subnets_) net.adam_step(lr);
  return loss;
}

double CouplingFlow::nll_gradient(const Eigen::MatrixXf& x,
                                  std::vector<float>* grad) {
  const int n = static_cast<int>(x.rows());
  if (n == 0) return 0.0;
  const int L = static_cast<int>(subnets_.size());

  struct Cache {
    Eigen::MatrixXf b_in;   // transformed half before the affine map
    Eigen::ArrayXXf th;     // tanh(raw/clamp)
    Eigen::ArrayXXf exp_s;
  };
  std::vector<Cache> caches(L);

  Eigen::MatrixXf z = x;
  double logdet_sum = 0;
  for (int i = 0; i < L; ++i) {
    const int a0 = (i % 2 == 0) ? 0 : half_;
    const int b0 = (i % 2 == 0) ? half_ : 0;
    Eigen::MatrixXf st = subnets_[i].forward_train(z.middleCols(a0, half_));
    auto& c = caches[i];
    c.b_in = z.middleCols(b0, half_);
    c.th = (st.leftCols(half_).array() / s_clamp_).tanh();
    Eigen::ArrayXXf s = s_clamp_ * c.th;
    c.exp_s = s.exp();
    z.middleCols(b0, half_) =
        (c.b_in.array() * c.exp_s + st.rightCols(half_).array()).matrix();
    logdet_sum += s.sum();
  }

  const double loss = (0.5 * z.squaredNorm() + 0.5 * n * dim_ * kLog2Pi -
                       logdet_sum) /
                      n;
  if (!std::isfinite(loss)) throw std::runtime_error("flow: non-finite loss");

  for (auto& net : subnets_) net.zero_grad();
  Eigen::MatrixXf g = z / static_cast<float>(n);
  for (int i = L - 1; i >= 0; --i) {
    const int a0 = (i % 2 == 0) ? 0 : half_;
    const int b0 = (i % 2 == 0) ? half_ : 0;
    const auto& c = caches[i];
    Eigen::ArrayXXf gb_out = g.middleCols(b0, half_).array();
    // d(loss)/ds has the affine path plus -1/n from the log-det term
    Eigen::ArrayXXf gs = gb_out * c.b_in.array() * c.exp_s - 1.0f / n;
    Eigen::MatrixXf grad_st(n, 2 * half_);
    grad_st.leftCols(half_) = (gs * (1.0f - c.th.square())).matrix();
    grad_st.rightCols(half_) = gb_out.matrix();
    Eigen::MatrixXf ga = subnets_[i].backward(grad_st);
    g.middleCols(b0, half_) = (gb_out * c.exp_s).matrix();
    g.middleCols(a0, half_) += ga;
  }
  if (grad) {
    grad->clear();
    for (const auto& net : subnets_) {
      auto gp = net.gradients();
      grad->insert(grad->end(), gp.begin(), gp.end());
    }
  }
  return loss;
}

std::size_t CouplingFlow::parameter_count() const {
  std::size_t n = 0;
  for (const auto& net : subnets_) n += net.parameter_count();
  return n;
}

std::vector<float> CouplingFlow::parameters() const {
  std::vector<float> out;
  for (const auto& net : subnets_) {
    auto p = net.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void CouplingFlow::set_parameters(const std::vector<float>& p) {
  std::size_t off = 0;
  for (auto& net : subnets_) {
    const std::size_t n = net.parameter_count();
    net.set_parameters(std::vector<float>(p.begin() + off, p.begin() + off + n));
    off += n;
  }
  if (off != p.size()) throw std::invalid_argument("flow: parameter size mismatch");
}

void CouplingFlow::save(std::ostream& out) const {
  const std::int32_t header[3] = {static_cast<std::int32_t>(dim_),
                                  static_cast<std::int32_t>(subnets_.size()), 0};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(&s_clamp_), sizeof(s_clamp_));
  for (const auto& net : subnets_) net.save(out);
}

CouplingFlow CouplingFlow::load(std::istream& in) {
  std::int32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  CouplingFlow f;
  f.dim_ = header[0];
  f.half_ = f.dim_ / 2;
  in.read(reinterpret_cast<char*>(&f.s_clamp_), sizeof(f.s_clamp_));
  f.subnets_.resize(header[1]);
  for (auto& net : f.subnets_) net = nn::Mlp::load(in);
  if (!in) throw std::runtime_error("flow: truncated checkpoint");
  return f;
}

}  // namespace streamad
