#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "streamad/nn.hpp"

namespace streamad {

// Stack of affine coupling layers over feature vectors (rows = samples).
// Each layer keeps one channel half fixed and applies an elementwise affine
// transform to the other, with scale/shift predicted from the fixed half;
// halves alternate between layers. Subnets start zero so the whole stack is
// the identity with log-det 0.
class CouplingFlow {
 public:
  CouplingFlow(int dim, int n_layers, int hidden, std::uint64_t seed);
  CouplingFlow() = default;

  // z = f(x); per-sample log |det df/dx| written to logdet when non-null.
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x,
                          Eigen::VectorXf* logdet = nullptr) const;
  // Closed-form inverse of forward.
  Eigen::MatrixXf inverse(const Eigen::MatrixXf& z) const;

  // Per-sample negative log-likelihood under a standard normal base.
  Eigen::VectorXf nll(const Eigen::MatrixXf& x) const;

  // One Adam step on the mean NLL; returns it. Non-finite -> runtime_error.
  double train_step(const Eigen::MatrixXf& x, float lr);

  // Mean NLL and its gradient w.r.t. all parameters (order of parameters()).
  double nll_gradient(const Eigen::MatrixXf& x, std::vector<float>* grad);

  int dim() const { return dim_; }
  std::size_t parameter_count() const;
  std::vector<float> parameters() const;
  void set_parameters(const std::vector<float>& p);

  void save(std::ostream& out) const;
  static CouplingFlow load(std::istream& in);

 private:
  int dim_ = 0;
  int half_ = 0;
  float s_clamp_ = 2.0f;  // soft clamp on the log-scale
  std::vector<nn::Mlp> subnets_;  // half -> 2*half (log-scale then shift)
};

}  // namespace streamad
