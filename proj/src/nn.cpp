#include "gevbf/nn.hpp"

#include <cmath>

#include "gevbf/error.hpp"

namespace gevbf::nn {

namespace {
std::string wname(const std::string& p, int i) { return p + "W" + std::to_string(i); }
std::string bname(const std::string& p, int i) { return p + "b" + std::to_string(i); }
}  // namespace

void add_dense(ParamStore& store, const std::string& prefix, int index, int in, int out, double gain, Rng& rng) {
  require(in >= 1 && out >= 1, ErrorKind::kInvalidConfig, "layer widths must be >= 1");
  const double limit = std::sqrt(gain / in);
  std::uniform_real_distribution<double> u(-limit, limit);
  Eigen::MatrixXd w(in, out);
  // fill in row-major order so the draw sequence does not depend on storage order
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) w(i, j) = u(rng);
  store.add(wname(prefix, index), std::move(w));
  store.add(bname(prefix, index), Eigen::MatrixXd::Zero(1, out));
}

Eigen::MatrixXd mlp_forward(const ParamStore& params, const std::string& prefix, int n_layers,
                            const Eigen::MatrixXd& x, MlpCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < n_layers; ++l) {
    const auto& w = params.value(wname(prefix, l));
    const auto& b = params.value(bname(prefix, l));
    require(h.cols() == w.rows(), ErrorKind::kShape,
            "layer " + prefix + std::to_string(l) + " expects width " + std::to_string(w.rows()));
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd z = h * w;
    z.rowwise() += b.row(0);
    if (l + 1 == n_layers) return z;
    if (cache) cache->pre.push_back(z);
    h = z.cwiseMax(0.0);
  }
  return h;
}

Eigen::MatrixXd mlp_backward(const ParamStore& params, const std::string& prefix, int n_layers,
                             const MlpCache& cache, const Eigen::MatrixXd& out_bar, ParamStore* grads) {
  require(static_cast<int>(cache.inputs.size()) == n_layers, ErrorKind::kState, "missing forward record");
  Eigen::MatrixXd g = out_bar;
  for (int l = n_layers - 1; l >= 0; --l) {
    if (l + 1 < n_layers) g = (cache.pre[l].array() > 0.0).select(g, 0.0);
    const auto& w = params.value(wname(prefix, l));
    if (grads) {
      grads->accumulate(wname(prefix, l), cache.inputs[l].transpose() * g);
      grads->accumulate(bname(prefix, l), g.colwise().sum());
    }
    g = g * w.transpose();
  }
  return g;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    p.row(t) = (logits.row(t).array() - mx).exp();
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

}  // namespace gevbf::nn
