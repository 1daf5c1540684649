#include "gevbf/am.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gevbf/error.hpp"

namespace gevbf {

namespace {
const std::string kLayers = "am_";
int n_layers(const AmConfig& cfg) { return static_cast<int>(cfg.hidden_dims.size()) + 1; }
}  // namespace

void AmConfig::validate() const {
  require(n_states >= 2, ErrorKind::kInvalidConfig, "am n_states must be >= 2");
  require(context >= 0, ErrorKind::kInvalidConfig, "am context must be >= 0");
  require(n_features >= 1, ErrorKind::kInvalidConfig, "am n_features must be >= 1");
  for (int h : hidden_dims) require(h >= 1, ErrorKind::kInvalidConfig, "am widths must be >= 1");
}

std::string AmConfig::to_text() const {
  std::ostringstream os;
  os << "n_features=" << n_features << "\nn_states=" << n_states << "\ncontext=" << context << "\nhidden_dims=";
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) os << (i ? "," : "") << hidden_dims[i];
  os << "\nseed=" << seed << "\n";
  return os.str();
}

AmConfig AmConfig::from_text(const std::string& text) {
  AmConfig cfg;
  cfg.hidden_dims.clear();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "n_features") cfg.n_features = std::stoi(val);
    else if (key == "n_states") cfg.n_states = std::stoi(val);
    else if (key == "context") cfg.context = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "hidden_dims") {
      std::istringstream vs(val);
      std::string item;
      while (std::getline(vs, item, ',')) cfg.hidden_dims.push_back(std::stoi(item));
    } else {
      fail(ErrorKind::kParse, "unknown am config key " + key);
    }
  }
  cfg.validate();
  return cfg;
}

ParamStore am_init(const AmConfig& cfg) {
  cfg.validate();
  ParamStore store;
  store.add("feat_mean", Eigen::MatrixXd::Zero(1, cfg.n_features), false);
  store.add("feat_std", Eigen::MatrixXd::Ones(1, cfg.n_features), false);
  Rng rng(derive_seed(cfg.seed, "am-init"));
  std::vector<int> widths{cfg.input_width()};
  widths.insert(widths.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  widths.push_back(cfg.n_states);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    nn::add_dense(store, kLayers, static_cast<int>(l), widths[l], widths[l + 1], l + 2 == widths.size() ? 3.0 : 6.0,
                  rng);
  return store;
}

Eigen::MatrixXd am_forward(const Eigen::MatrixXd& features, const AmConfig& cfg, const ParamStore& params,
                           AmRecord* record) {
  require(features.cols() == cfg.n_features, ErrorKind::kShape,
          "am expects " + std::to_string(cfg.n_features) + " features, got " + std::to_string(features.cols()));
  require(features.rows() >= 1, ErrorKind::kShape, "am needs at least one frame");
  require(features.allFinite(), ErrorKind::kInvalidInput, "am features must be finite");
  const auto& mean = params.value("feat_mean");
  const auto& sd = params.value("feat_std");
  const Eigen::Index t_len = features.rows(), nf = cfg.n_features;
  Eigen::MatrixXd norm = features;
  norm.rowwise() -= mean.row(0);
  norm.array().rowwise() /= sd.row(0).array();
  Eigen::MatrixXd stacked(t_len, cfg.input_width());
  for (Eigen::Index t = 0; t < t_len; ++t)
    for (int c = -cfg.context; c <= cfg.context; ++c) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + c, 0, t_len - 1);
      stacked.block(t, (c + cfg.context) * nf, 1, nf) = norm.row(src);
    }
  AmRecord local;
  AmRecord& rec = record ? *record : local;
  rec.stacked = std::move(stacked);
  const Eigen::MatrixXd logits = nn::mlp_forward(params, kLayers, n_layers(cfg), rec.stacked, &rec.mlp);
  rec.posteriors = nn::softmax_rows(logits);
  return rec.posteriors;
}

Eigen::MatrixXd am_backward(const AmConfig& cfg, const ParamStore& params, const AmRecord& record,
                            const Eigen::MatrixXd& logits_bar, ParamStore* grads) {
  require(record.stacked.size() > 0, ErrorKind::kState, "missing am forward record");
  const Eigen::MatrixXd stacked_bar = nn::mlp_backward(params, kLayers, n_layers(cfg), record.mlp, logits_bar, grads);
  const Eigen::Index t_len = stacked_bar.rows(), nf = cfg.n_features;
  Eigen::MatrixXd norm_bar = Eigen::MatrixXd::Zero(t_len, nf);
  for (Eigen::Index t = 0; t < t_len; ++t)
    for (int c = -cfg.context; c <= cfg.context; ++c) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + c, 0, t_len - 1);
      norm_bar.row(src) += stacked_bar.block(t, (c + cfg.context) * nf, 1, nf);
    }
  norm_bar.array().rowwise() /= params.value("feat_std").row(0).array();
  return norm_bar;
}

namespace {
void check_targets(const Eigen::MatrixXd& p, const StateSequence& targets) {
  require(static_cast<Eigen::Index>(targets.size()) == p.rows(), ErrorKind::kShape,
          "target length " + std::to_string(targets.size()) + " != frame count " + std::to_string(p.rows()));
  for (int s : targets)
    require(s >= 0 && s < p.cols(), ErrorKind::kInvalidInput, "target state out of range");
}
}  // namespace

double ce_loss(const Eigen::MatrixXd& posteriors, const StateSequence& targets) {
  check_targets(posteriors, targets);
  require(!targets.empty(), ErrorKind::kShape, "empty target sequence");
  double acc = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t)
    acc -= std::log(std::max(posteriors(static_cast<Eigen::Index>(t), targets[t]), kPosteriorFloor));
  return acc / static_cast<double>(targets.size());
}

Eigen::MatrixXd ce_logits_grad(const Eigen::MatrixXd& posteriors, const StateSequence& targets) {
  check_targets(posteriors, targets);
  const double inv_t = 1.0 / static_cast<double>(targets.size());
  Eigen::MatrixXd g = posteriors * inv_t;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    if (posteriors(row, targets[t]) <= kPosteriorFloor) g.row(row).setZero();
    else g(row, targets[t]) -= inv_t;
  }
  return g;
}

StateSequence argmax_states(const Eigen::MatrixXd& posteriors) {
  StateSequence out(posteriors.rows());
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) posteriors.row(t).maxCoeff(&out[t]);
  return out;
}

double frame_accuracy(const Eigen::MatrixXd& posteriors, const StateSequence& targets) {
  check_targets(posteriors, targets);
  const StateSequence pred = argmax_states(posteriors);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) hits += pred[t] == targets[t];
  return targets.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(targets.size());
}

namespace {
double dataset_loss(const std::vector<AmExample>& data, const AmConfig& cfg, const ParamStore& p) {
  double acc = 0.0;
  for (const auto& ex : data) acc += ce_loss(am_forward(ex.features, cfg, p), ex.states);
  return acc / static_cast<double>(data.size());
}
}  // namespace

AmTrainResult am_train(const std::vector<AmExample>& data, const AmConfig& cfg, const AmTrainConfig& train) {
  require(!data.empty(), ErrorKind::kInvalidInput, "am training needs at least one utterance");
  require(train.epochs >= 0 && train.batch >= 1 && train.lr >= 0.0, ErrorKind::kInvalidConfig,
          "am training epochs/batch/lr out of range");
  ParamStore params = am_init(cfg);

  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(cfg.n_features), sq = sum;
  double frames = 0.0;
  for (const auto& ex : data) {
    require(ex.features.cols() == cfg.n_features, ErrorKind::kShape, "am training features width");
    sum += ex.features.colwise().sum();
    sq += ex.features.array().square().matrix().colwise().sum();
    frames += static_cast<double>(ex.features.rows());
  }
  const Eigen::RowVectorXd mean = sum / frames;
  const Eigen::RowVectorXd var = (sq / frames - mean.cwiseAbs2()).cwiseMax(0.0);
  params.mutable_value("feat_mean") = mean;
  params.mutable_value("feat_std") = var.cwiseSqrt().cwiseMax(1e-3);

  AmTrainResult res;
  res.loss.push_back(dataset_loss(data, cfg, params));
  Adam opt;
  Rng rng(derive_seed(train.seed, "am-shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += train.batch) {
      const std::size_t stop = std::min(order.size(), start + train.batch);
      params.zero_grad();
      for (std::size_t j = start; j < stop; ++j) {
        const auto& ex = data[order[j]];
        AmRecord rec;
        am_forward(ex.features, cfg, params, &rec);
        const Eigen::MatrixXd g = ce_logits_grad(rec.posteriors, ex.states) / static_cast<double>(stop - start);
        am_backward(cfg, params, rec, g, &params);
      }
      opt.step(params, train.lr);
    }
    res.loss.push_back(dataset_loss(data, cfg, params));
  }
  params.zero_grad();
  res.params = std::move(params);
  return res;
}

}  // namespace gevbf
