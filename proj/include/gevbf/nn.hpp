#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gevbf/params.hpp"
#include "gevbf/random.hpp"

// Row-batched dense layers: X [T, in] -> X W + b, W [in, out], b [1, out].
namespace gevbf::nn {

// Adds W and b named `<prefix>W<i>` / `<prefix>b<i>`; uniform weights with
// limit sqrt(gain / fan_in), zero bias.
void add_dense(ParamStore& store, const std::string& prefix, int index, int in, int out, double gain, Rng& rng);

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
};

// Runs layers [0, n_layers) with ReLU between them; returns the last layer's
// pre-activation.
Eigen::MatrixXd mlp_forward(const ParamStore& params, const std::string& prefix, int n_layers,
                            const Eigen::MatrixXd& x, MlpCache* cache);

// Given dL/d(output pre-activation) returns dL/dx. Parameter gradients are
// accumulated into `grads` when non-null.
Eigen::MatrixXd mlp_backward(const ParamStore& params, const std::string& prefix, int n_layers,
                             const MlpCache& cache, const Eigen::MatrixXd& out_bar, ParamStore* grads);

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// ln(1 + e^z) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace gevbf::nn
