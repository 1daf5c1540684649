#include "gevbf/maskestim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gevbf/error.hpp"

namespace gevbf {

namespace {

const std::string kDense = "dense_";

int dense_layers(const MaskNetConfig& cfg) {
  return static_cast<int>(cfg.hidden_dims.size()) + (cfg.recurrent_first_layer ? 0 : 1);
}

}  // namespace

void MaskNetConfig::validate() const {
  require(input_dim >= 1, ErrorKind::kInvalidConfig, "mask net input_dim must be >= 1");
  require(!hidden_dims.empty(), ErrorKind::kInvalidConfig, "mask net needs at least one hidden layer");
  for (int h : hidden_dims) require(h >= 1, ErrorKind::kInvalidConfig, "mask net widths must be >= 1");
}

std::string MaskNetConfig::to_text() const {
  std::ostringstream os;
  os << "input_dim=" << input_dim << "\nhidden_dims=";
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) os << (i ? "," : "") << hidden_dims[i];
  os << "\nrecurrent_first_layer=" << (recurrent_first_layer ? 1 : 0) << "\nseed=" << seed << "\n";
  return os.str();
}

MaskNetConfig MaskNetConfig::from_text(const std::string& text) {
  MaskNetConfig cfg;
  cfg.hidden_dims.clear();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "input_dim") {
      cfg.input_dim = std::stoi(val);
    } else if (key == "hidden_dims") {
      std::istringstream vs(val);
      std::string item;
      while (std::getline(vs, item, ',')) cfg.hidden_dims.push_back(std::stoi(item));
    } else if (key == "recurrent_first_layer") {
      cfg.recurrent_first_layer = val == "1";
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else {
      fail(ErrorKind::kParse, "unknown mask net config key " + key);
    }
  }
  cfg.validate();
  return cfg;
}

ParamStore init_params(const MaskNetConfig& cfg) {
  cfg.validate();
  ParamStore store;
  Rng rng(derive_seed(cfg.seed, "masknet-init"));
  std::vector<int> widths{cfg.input_dim};
  std::size_t first_dense = 0;
  if (cfg.recurrent_first_layer) {
    const int in = cfg.input_dim, h = cfg.hidden_dims[0];
    for (const char* dir : {"rnn_fw_", "rnn_bw_"}) {
      std::uniform_real_distribution<double> ux(-std::sqrt(1.0 / in), std::sqrt(1.0 / in));
      std::uniform_real_distribution<double> uh(-std::sqrt(1.0 / h), std::sqrt(1.0 / h));
      Eigen::MatrixXd wx(in, h), wh(h, h);
      for (int i = 0; i < in; ++i)
        for (int j = 0; j < h; ++j) wx(i, j) = ux(rng);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < h; ++j) wh(i, j) = uh(rng);
      store.add(std::string(dir) + "Wx", std::move(wx));
      store.add(std::string(dir) + "Wh", std::move(wh));
      store.add(std::string(dir) + "b", Eigen::MatrixXd::Zero(1, h));
    }
    widths = {2 * h};
    first_dense = 1;
  }
  for (std::size_t i = first_dense; i < cfg.hidden_dims.size(); ++i) widths.push_back(cfg.hidden_dims[i]);
  widths.push_back(cfg.output_dim());
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    nn::add_dense(store, kDense, static_cast<int>(l), widths[l], widths[l + 1], last ? 3.0 : 6.0, rng);
  }
  return store;
}

Eigen::MatrixXd mask_features(const Eigen::MatrixXd& magnitude) {
  require(magnitude.allFinite() && (magnitude.array() >= 0.0).all(), ErrorKind::kInvalidInput,
          "magnitudes must be finite and nonnegative");
  Eigen::MatrixXd l = magnitude.cwiseMax(1e-5).array().log().matrix();
  const double mean = l.mean();
  l.array() -= mean;
  const double sd = std::sqrt(l.squaredNorm() / std::max<Eigen::Index>(l.size(), 1));
  if (sd > 1e-8) l /= sd;
  return l;
}

namespace {

Eigen::MatrixXd rnn_direction(const Eigen::MatrixXd& x, const ParamStore& p, const std::string& dir, bool reverse) {
  const auto& wx = p.value(dir + "Wx");
  const auto& wh = p.value(dir + "Wh");
  const auto& b = p.value(dir + "b");
  require(x.cols() == wx.rows(), ErrorKind::kShape, "recurrent layer input width");
  const Eigen::Index t_len = x.rows(), h = wx.cols();
  Eigen::MatrixXd drive = x * wx;
  drive.rowwise() += b.row(0);
  Eigen::MatrixXd hs(t_len, h);
  Eigen::RowVectorXd prev = Eigen::RowVectorXd::Zero(h);
  for (Eigen::Index k = 0; k < t_len; ++k) {
    const Eigen::Index t = reverse ? t_len - 1 - k : k;
    hs.row(t) = (drive.row(t) + prev * wh).array().tanh();
    prev = hs.row(t);
  }
  return hs;
}

void rnn_direction_vjp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& hs, const Eigen::MatrixXd& h_bar,
                       const ParamStore& p, const std::string& dir, bool reverse, ParamStore& grads) {
  const auto& wh = p.value(dir + "Wh");
  const Eigen::Index t_len = x.rows(), h = hs.cols();
  Eigen::MatrixXd a_bar(t_len, h);
  Eigen::RowVectorXd carry = Eigen::RowVectorXd::Zero(h);
  Eigen::MatrixXd wh_bar = Eigen::MatrixXd::Zero(h, h);
  for (Eigen::Index k = t_len - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? t_len - 1 - k : k;
    const Eigen::RowVectorXd total = h_bar.row(t) + carry;
    a_bar.row(t) = total.array() * (1.0 - hs.row(t).array().square());
    if (k > 0) {
      const Eigen::Index prev = reverse ? t + 1 : t - 1;
      wh_bar += hs.row(prev).transpose() * a_bar.row(t);
    }
    carry = a_bar.row(t) * wh.transpose();
  }
  grads.accumulate(dir + "Wx", x.transpose() * a_bar);
  grads.accumulate(dir + "Wh", wh_bar);
  grads.accumulate(dir + "b", a_bar.colwise().sum());
}

}  // namespace

MaskPair mask_forward(const Eigen::MatrixXd& magnitude, const MaskNetConfig& cfg, const ParamStore& params,
                      MaskNetRecord* record) {
  require(magnitude.cols() == cfg.input_dim, ErrorKind::kShape,
          "mask net expects " + std::to_string(cfg.input_dim) + " bins, got " + std::to_string(magnitude.cols()));
  MaskNetRecord local;
  MaskNetRecord& rec = record ? *record : local;
  rec.input = mask_features(magnitude);
  Eigen::MatrixXd h = rec.input;
  if (cfg.recurrent_first_layer) {
    rec.rnn.fw = rnn_direction(rec.input, params, "rnn_fw_", false);
    rec.rnn.bw = rnn_direction(rec.input, params, "rnn_bw_", true);
    h.resize(rec.input.rows(), 2 * rec.rnn.fw.cols());
    h << rec.rnn.fw, rec.rnn.bw;
  }
  rec.logits = nn::mlp_forward(params, kDense, dense_layers(cfg), h, &rec.mlp);
  const int f = cfg.input_dim;
  MaskPair out;
  out.noise = rec.logits.leftCols(f).unaryExpr([](double z) { return nn::sigmoid(z); });
  out.speech = rec.logits.rightCols(f).unaryExpr([](double z) { return nn::sigmoid(z); });
  rec.out = out;
  return out;
}

void mask_backward(const MaskNetConfig& cfg, const ParamStore& params, const MaskNetRecord& record,
                   const Eigen::MatrixXd& noise_bar, const Eigen::MatrixXd& speech_bar, ParamStore& grads) {
  if (grads.frozen()) fail(ErrorKind::kFreezeViolation, "mask backward into a frozen store");
  require(record.logits.size() > 0, ErrorKind::kState, "missing mask net forward record");
  const int f = cfg.input_dim;
  require(noise_bar.rows() == record.logits.rows() && noise_bar.cols() == f && speech_bar.rows() == noise_bar.rows() &&
              speech_bar.cols() == f,
          ErrorKind::kShape, "mask cotangent shape");
  Eigen::MatrixXd z_bar(record.logits.rows(), 2 * f);
  z_bar.leftCols(f) = noise_bar.cwiseProduct(record.out.noise.cwiseProduct((1.0 - record.out.noise.array()).matrix()));
  z_bar.rightCols(f) =
      speech_bar.cwiseProduct(record.out.speech.cwiseProduct((1.0 - record.out.speech.array()).matrix()));
  const Eigen::MatrixXd h_bar = nn::mlp_backward(params, kDense, dense_layers(cfg), record.mlp, z_bar, &grads);
  if (cfg.recurrent_first_layer) {
    const Eigen::Index hw = record.rnn.fw.cols();
    rnn_direction_vjp(record.input, record.rnn.fw, h_bar.leftCols(hw), params, "rnn_fw_", false, grads);
    rnn_direction_vjp(record.input, record.rnn.bw, h_bar.rightCols(hw), params, "rnn_bw_", true, grads);
  }
}

namespace {

// Channel indices sorted by (value, index) at one cell.
void order_cell(const std::vector<Eigen::MatrixXd>& pc, Eigen::Index i, std::vector<int>& idx) {
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double va = pc[a].data()[i], vb = pc[b].data()[i];
    return va < vb || (va == vb && a < b);
  });
}

void check_channels(const std::vector<Eigen::MatrixXd>& pc) {
  require(!pc.empty(), ErrorKind::kInvalidInput, "median of zero channels");
  for (const auto& m : pc)
    require(m.rows() == pc[0].rows() && m.cols() == pc[0].cols(), ErrorKind::kShape, "channel mask shapes differ");
}

}  // namespace

Eigen::MatrixXd median_mask(const std::vector<Eigen::MatrixXd>& per_channel) {
  check_channels(per_channel);
  const int m = static_cast<int>(per_channel.size());
  Eigen::MatrixXd out(per_channel[0].rows(), per_channel[0].cols());
  std::vector<int> idx(m);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    order_cell(per_channel, i, idx);
    out.data()[i] = m % 2 ? per_channel[idx[m / 2]].data()[i]
                          : 0.5 * (per_channel[idx[m / 2 - 1]].data()[i] + per_channel[idx[m / 2]].data()[i]);
  }
  return out;
}

std::vector<Eigen::MatrixXd> median_mask_vjp(const std::vector<Eigen::MatrixXd>& per_channel,
                                             const Eigen::MatrixXd& pooled_bar) {
  check_channels(per_channel);
  require(pooled_bar.rows() == per_channel[0].rows() && pooled_bar.cols() == per_channel[0].cols(), ErrorKind::kShape,
          "median cotangent shape");
  const int m = static_cast<int>(per_channel.size());
  std::vector<Eigen::MatrixXd> out(m, Eigen::MatrixXd::Zero(pooled_bar.rows(), pooled_bar.cols()));
  std::vector<int> idx(m);
  for (Eigen::Index i = 0; i < pooled_bar.size(); ++i) {
    order_cell(per_channel, i, idx);
    const double g = pooled_bar.data()[i];
    if (m % 2) {
      out[idx[m / 2]].data()[i] = g;
    } else {
      out[idx[m / 2 - 1]].data()[i] = 0.5 * g;
      out[idx[m / 2]].data()[i] = 0.5 * g;
    }
  }
  return out;
}

double bce(const Eigen::MatrixXd& p, const Eigen::MatrixXd& target) {
  require(p.rows() == target.rows() && p.cols() == target.cols(), ErrorKind::kShape, "bce shape");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.data()[i], 1e-12, 1.0 - 1e-12), t = target.data()[i];
    acc -= t * std::log(q) + (1.0 - t) * std::log1p(-q);
  }
  return acc / static_cast<double>(p.size());
}

double mask_bce(const MaskPair& pred, const MaskTrainingExample& target) {
  return 0.5 * (bce(pred.noise, target.noise_target) + bce(pred.speech, target.speech_target));
}

namespace {

// Mean BCE from logits, and its gradient with respect to the logits.
double bce_logits(const Eigen::MatrixXd& z, const MaskTrainingExample& ex, int f, Eigen::MatrixXd* z_bar) {
  const double n = static_cast<double>(z.size());
  double acc = 0.0;
  if (z_bar) z_bar->resize(z.rows(), z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      const double target = k < f ? ex.noise_target(t, k) : ex.speech_target(t, k - f);
      const double v = z(t, k);
      acc += nn::softplus(v) - target * v;
      if (z_bar) (*z_bar)(t, k) = (nn::sigmoid(v) - target) / n;
    }
  return acc / n;
}

double dataset_loss(const std::vector<MaskTrainingExample>& data, const MaskNetConfig& cfg, const ParamStore& p) {
  double acc = 0.0;
  for (const auto& ex : data) {
    MaskNetRecord rec;
    mask_forward(ex.magnitude, cfg, p, &rec);
    acc += bce_logits(rec.logits, ex, cfg.input_dim, nullptr);
  }
  return acc / static_cast<double>(data.size());
}

}  // namespace

PretrainResult pretrain_supervised(const std::vector<MaskTrainingExample>& data, const MaskNetConfig& cfg,
                                   const PretrainConfig& train) {
  return pretrain_supervised(data, cfg, train, init_params(cfg));
}

PretrainResult pretrain_supervised(const std::vector<MaskTrainingExample>& data, const MaskNetConfig& cfg,
                                   const PretrainConfig& train, ParamStore params) {
  require(!data.empty(), ErrorKind::kInvalidInput, "pretraining needs at least one example");
  require(train.epochs >= 0 && train.batch >= 1 && train.lr >= 0.0, ErrorKind::kInvalidConfig,
          "pretraining epochs/batch/lr out of range");
  for (const auto& ex : data)
    require(ex.magnitude.cols() == cfg.input_dim && ex.speech_target.rows() == ex.magnitude.rows() &&
                ex.speech_target.cols() == cfg.input_dim && ex.noise_target.rows() == ex.magnitude.rows() &&
                ex.noise_target.cols() == cfg.input_dim,
            ErrorKind::kShape, "training example shape");
  PretrainResult res;
  res.loss.push_back(dataset_loss(data, cfg, params));
  Adam opt;
  Rng rng(derive_seed(train.seed, "pretrain-shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += train.batch) {
      const std::size_t stop = std::min(order.size(), start + train.batch);
      params.zero_grad();
      for (std::size_t j = start; j < stop; ++j) {
        const auto& ex = data[order[j]];
        MaskNetRecord rec;
        mask_forward(ex.magnitude, cfg, params, &rec);
        Eigen::MatrixXd z_bar;
        bce_logits(rec.logits, ex, cfg.input_dim, &z_bar);
        z_bar /= static_cast<double>(stop - start);
        // sigmoid cancels against the BCE derivative; go straight to the MLP
        const Eigen::MatrixXd h_bar =
            nn::mlp_backward(params, "dense_", dense_layers(cfg), rec.mlp, z_bar, &params);
        if (cfg.recurrent_first_layer) {
          const Eigen::Index hw = rec.rnn.fw.cols();
          rnn_direction_vjp(rec.input, rec.rnn.fw, h_bar.leftCols(hw), params, "rnn_fw_", false, params);
          rnn_direction_vjp(rec.input, rec.rnn.bw, h_bar.rightCols(hw), params, "rnn_bw_", true, params);
        }
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
