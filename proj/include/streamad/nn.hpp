#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace streamad::nn {

// Fully-connected network with ReLU hidden activations and a linear output,
// explicit backprop, Adam updates. Rows of the input matrix are samples.
class Mlp {
 public:
  // sizes = {in, hidden..., out}. He-initialized; zero_init_last zeroes the
  // final layer (identity-style start for flows and residual heads).
  Mlp(std::vector<int> sizes, std::uint64_t seed, bool zero_init_last = false);
  Mlp() = default;

  // Pure inference path.
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x) const;

  // Training path: caches activations for backward().
  Eigen::MatrixXf forward_train(const Eigen::MatrixXf& x);

  // Accumulates parameter gradients from dL/d(output); returns dL/d(input).
  Eigen::MatrixXf backward(const Eigen::MatrixXf& grad_out);

  void zero_grad();
  void adam_step(float lr);

  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  std::size_t parameter_count() const;
  std::vector<float> parameters() const;
  void set_parameters(const std::vector<float>& p);
  std::vector<float> gradients() const;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  struct Layer {
    Eigen::MatrixXf w;  // out x in
    Eigen::VectorXf b;
    Eigen::MatrixXf gw;
    Eigen::VectorXf gb;
    // Adam state
    Eigen::MatrixXf mw, vw;
    Eigen::VectorXf mb, vb;
  };
  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  std::vector<Eigen::MatrixXf> cache_;  // inputs to each layer (training path)
  long adam_t_ = 0;
};

// Row-wise L2 normalization and its backward pass (grad through x / ||x||).
Eigen::MatrixXf l2_normalize_rows(const Eigen::MatrixXf& x, float eps = 1e-8f);
Eigen::MatrixXf l2_normalize_rows_backward(const Eigen::MatrixXf& x,
                                           const Eigen::MatrixXf& grad_out,
                                           float eps = 1e-8f);

}  // namespace streamad::nn
