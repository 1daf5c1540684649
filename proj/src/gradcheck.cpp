#include "gevbf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gevbf/error.hpp"
#include "gevbf/grad.hpp"
#include "gevbf/random.hpp"

namespace gevbf {

namespace {

using RealFn = std::function<double(const Eigen::VectorXd&)>;
using ComplexFn = std::function<double(const ComplexMatrix&)>;

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

double inner(const ComplexMatrix& a, const ComplexMatrix& b) { return (a.conjugate().cwiseProduct(b)).sum().real(); }

struct Tally {
  double worst = 0.0;
  std::size_t count = 0;
  void add(double analytic, double numeric) {
    worst = std::max(worst, rel(analytic, numeric));
    ++count;
  }
};

double step_for(double eps, double scale) { return eps * std::max(scale, 1e-300); }

void fd_real(Tally& t, const RealFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double eps) {
  const double h = step_for(eps, x.cwiseAbs().maxCoeff());
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    p(i) = x(i) + h;
    const double fp = f(p);
    p(i) = x(i) - h;
    const double fm = f(p);
    p(i) = x(i);
    t.add(analytic(i), (fp - fm) / (2.0 * h));
  }
}

void fd_complex(Tally& t, const ComplexFn& f, const ComplexMatrix& x, const ComplexMatrix& analytic, double eps) {
  const double h = step_for(eps, x.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (const cdouble dir : {cdouble(1.0, 0.0), cdouble(0.0, 1.0)}) {
        ComplexMatrix p = x, m = x;
        p(i, j) += h * dir;
        m(i, j) -= h * dir;
        const double exact = dir.real() != 0.0 ? analytic(i, j).real() : analytic(i, j).imag();
        t.add(exact, (f(p) - f(m)) / (2.0 * h));
      }
}

// Hermitian directions only; `analytic` is the Hermitian cotangent.
void fd_hermitian(Tally& t, const ComplexFn& f, const ComplexMatrix& x, const ComplexMatrix& analytic, double eps) {
  const double h = step_for(eps, x.cwiseAbs().maxCoeff());
  const Eigen::Index n = x.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      for (const cdouble dir : {cdouble(1.0, 0.0), cdouble(0.0, 1.0)}) {
        if (i == j && dir.imag() != 0.0) continue;
        ComplexMatrix e = ComplexMatrix::Zero(n, n);
        e(i, j) = dir;
        e(j, i) = std::conj(dir);
        t.add(inner(analytic, e), (f(x + h * e) - f(x - h * e)) / (2.0 * h));
      }
}

ComplexMatrix random_complex(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  ComplexMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = cdouble(g(rng), g(rng));
  return m;
}

Eigen::MatrixXd random_real(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

ComplexMatrix random_psd(Rng& rng, Eigen::Index n, Eigen::Index dof, double ridge) {
  const ComplexMatrix a = random_complex(rng, n, dof);
  ComplexMatrix p = a * a.adjoint() / static_cast<double>(dof);
  p.diagonal().array() += ridge;
  return hermitian_part(p);
}

ComplexSpectrogram random_spec(Rng& rng, int m, int t, int f, StftConfig cfg = {}) {
  ComplexSpectrogram y(m, t, f, cfg);
  const ComplexMatrix r = random_complex(rng, m * t, f);
  for (int c = 0; c < m; ++c)
    for (int i = 0; i < t; ++i)
      for (int k = 0; k < f; ++k) y(c, i, k) = r(c * t + i, k);
  return y;
}

GradCheckReport check_log_mel(Rng& rng, double eps) {
  const StftConfig cfg;
  const MelBank bank = MelBank::build(cfg);
  const Eigen::VectorXd p = random_real(rng, cfg.num_bins(), 1, 0.1, 2.0);
  const Eigen::VectorXd g = random_real(rng, bank.num_mels(), 1, -1.0, 1.0);
  const Eigen::VectorXd analytic = log_mel_vjp(std::span<const double>(p.data(), p.size()), bank, g);
  // difference the output vectors before contracting, so mels the bin does
  // not touch cancel exactly instead of adding roundoff
  Tally t;
  const double h = step_for(eps, p.cwiseAbs().maxCoeff());
  Eigen::VectorXd q = p;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    q(i) = p(i) + h;
    const Eigen::VectorXd up = log_mel(std::span<const double>(q.data(), q.size()), bank);
    q(i) = p(i) - h;
    const Eigen::VectorXd down = log_mel(std::span<const double>(q.data(), q.size()), bank);
    q(i) = p(i);
    t.add(analytic(i), g.dot(up - down) / (2.0 * h));
  }
  return {"log_mel", t.worst, t.count, eps, 0};
}

GradCheckReport check_qr(Rng& rng, double eps) {
  const ComplexMatrix a = random_complex(rng, 4, 4);
  const ComplexMatrix qb = random_complex(rng, 4, 4), rb = random_complex(rng, 4, 4);
  const QrFactors qr = qr_decompose(a);
  const ComplexMatrix analytic = qr_vjp(a, qr.q, qr.r, qb, rb);
  Tally t;
  fd_complex(t, [&](const ComplexMatrix& x) {
    const QrFactors f = qr_decompose(x);
    return inner(qb, f.q) + inner(rb, f.r);
  }, a, analytic, eps);
  return {"qr_vjp", t.worst, t.count, eps, 0};
}

GradCheckReport check_cov(Rng& rng, double eps) {
  const ComplexSpectrogram y = random_spec(rng, 2, 3, 2);
  const Eigen::MatrixXd mask = random_real(rng, 3, 2, 0.2, 1.0);
  std::vector<ComplexMatrix> bar{hermitian_part(random_complex(rng, 2, 2)), hermitian_part(random_complex(rng, 2, 2))};
  const Eigen::MatrixXd analytic = cov_vjp(y, mask, bar);
  Tally t;
  fd_real(t, [&](const Eigen::VectorXd& v) {
    const auto cov = spatial_covariance(y, Eigen::Map<const Eigen::MatrixXd>(v.data(), 3, 2), CovKind::kSpeech);
    return inner(bar[0], cov.phi[0]) + inner(bar[1], cov.phi[1]);
  }, Eigen::Map<const Eigen::VectorXd>(mask.data(), mask.size()),
          Eigen::Map<const Eigen::VectorXd>(analytic.data(), analytic.size()), eps);
  return {"cov_vjp", t.worst, t.count, eps, 0};
}

GradCheckReport check_eig(Rng& rng, double eps) {
  const int n = 3;
  const ComplexVector d = random_complex(rng, n, 1);
  const ComplexMatrix xx = hermitian_part(4.0 * d * d.adjoint() + random_psd(rng, n, n + 2, 0.05));
  const ComplexMatrix nn = random_psd(rng, n, 2 * n + 2, 0.1);
  const ComplexVector wb = random_complex(rng, n, 1);
  const int k = kDefaultQrIterations;
  const double load = kDefaultLoading;
  const CovariancePairBar bar = eig_chain_vjp(xx, nn, k, load, wb);
  const auto w_of = [&](const ComplexMatrix& a, const ComplexMatrix& b) {
    return gev_bin_forward(a, b, k, load).fixed.v;
  };
  Tally t;
  fd_hermitian(t, [&](const ComplexMatrix& x) { return inner(wb, w_of(x, nn)); }, xx, bar.phi_xx_bar, eps);
  fd_hermitian(t, [&](const ComplexMatrix& x) { return inner(wb, w_of(xx, x)); }, nn, bar.phi_nn_bar, eps);
  return {"eig_chain_vjp", t.worst, t.count, eps, 0};
}

GradCheckReport check_ban(Rng& rng, double eps) {
  const int n = 4;
  const ComplexVector w = random_complex(rng, n, 1);
  const ComplexMatrix pn = random_psd(rng, n, n + 2, 0.1);
  const ComplexVector ob = random_complex(rng, n, 1);
  const BanBar bar = ban_vjp(w, pn, ob);
  const auto f = [&](const ComplexVector& v, const ComplexMatrix& p) { return inner(ob, ban_gain(v, p) * v); };
  Tally t;
  fd_complex(t, [&](const ComplexMatrix& v) { return f(v, pn); }, w, bar.w_bar, eps);
  fd_hermitian(t, [&](const ComplexMatrix& p) { return f(w, p); }, pn, hermitian_part(bar.phi_nn_bar), eps);
  return {"ban", t.worst, t.count, eps, 0};
}

GradCheckReport check_apply(Rng& rng, double eps) {
  const ComplexSpectrogram y = random_spec(rng, 3, 4, 3);
  BeamformerWeights w;
  for (int f = 0; f < 3; ++f) w.w.push_back(random_complex(rng, 3, 1));
  const Eigen::MatrixXcd sb = random_complex(rng, 4, 3);
  const auto analytic = apply_vjp(y, sb);
  Tally t;
  for (int f = 0; f < 3; ++f) {
    fd_complex(t, [&](const ComplexMatrix& v) {
      BeamformerWeights p = w;
      p.w[f] = v;
      return inner(sb, apply_beamformer(p, y));
    }, w.w[f], analytic[f], eps);
  }
  return {"apply", t.worst, t.count, eps, 0};
}

GradCheckReport check_power(Rng& rng, double eps) {
  const Eigen::MatrixXcd s = random_complex(rng, 4, 3);
  const Eigen::MatrixXd pb = random_real(rng, 4, 3, -1.0, 1.0);
  Tally t;
  fd_complex(t, [&](const ComplexMatrix& x) { return power_spectrum(x).cwiseProduct(pb).sum(); }, s,
             power_spectrum_vjp(s, pb), eps);
  return {"power", t.worst, t.count, eps, 0};
}

GradCheckReport check_median(Rng& rng, double eps) {
  std::vector<Eigen::MatrixXd> ch;
  for (int m = 0; m < 3; ++m) ch.push_back(random_real(rng, 3, 4, 0.0, 1.0));
  const Eigen::MatrixXd g = random_real(rng, 3, 4, -1.0, 1.0);
  const auto routed = median_mask_vjp(ch, g);
  Eigen::VectorXd x(36), analytic(36);
  for (int m = 0; m < 3; ++m) {
    x.segment(m * 12, 12) = Eigen::Map<const Eigen::VectorXd>(ch[m].data(), 12);
    analytic.segment(m * 12, 12) = Eigen::Map<const Eigen::VectorXd>(routed[m].data(), 12);
  }
  Tally t;
  fd_real(t, [&](const Eigen::VectorXd& v) {
    std::vector<Eigen::MatrixXd> p(3);
    for (int m = 0; m < 3; ++m) p[m] = Eigen::Map<const Eigen::MatrixXd>(v.data() + m * 12, 3, 4);
    return median_mask(p).cwiseProduct(g).sum();
  }, x, analytic, eps);
  return {"median", t.worst, t.count, eps, 0};
}

GradCheckReport check_mask_net(Rng& rng, double eps, std::uint64_t seed) {
  MaskNetConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dims = {6, 4};
  cfg.seed = seed;
  ParamStore p = init_params(cfg);
  for (int i = 0; i < p.size(); ++i)
    if (p.entry(i).name.find("_b") != std::string::npos)
      p.mutable_value(p.entry(i).name) = random_real(rng, 1, p.entry(i).value.cols(), -0.3, 0.3);
  const Eigen::MatrixXd mag = random_real(rng, 6, 5, 0.05, 3.0);
  const Eigen::MatrixXd nb = random_real(rng, 6, 5, -1.0, 1.0), sb = random_real(rng, 6, 5, -1.0, 1.0);
  MaskNetRecord rec;
  mask_forward(mag, cfg, p, &rec);
  mask_backward(cfg, p, rec, nb, sb, p);
  ParamStore probe = p;
  Tally t;
  fd_real(t, [&](const Eigen::VectorXd& v) {
    probe.set_flat_values(v);
    const MaskPair out = mask_forward(mag, cfg, probe);
    return out.noise.cwiseProduct(nb).sum() + out.speech.cwiseProduct(sb).sum();
  }, p.flat_values(), p.flat_grads(), eps);
  return {"mask_backward", t.worst, t.count, eps, 0};
}

GradCheckReport check_pipeline(double eps, std::uint64_t seed) {
  TinyScene sc = tiny_scene(seed);
  const PipelineRecord rec = pipeline_forward(sc.sys, sc.y, &sc.targets);
  ParamStore grads = sc.sys.mask;
  grads.zero_grad();
  pipeline_vjp(sc.sys, rec, 1.0, grads);
  System probe = sc.sys;
  Tally t;
  fd_real(t, [&](const Eigen::VectorXd& v) {
    probe.mask.set_flat_values(v);
    return pipeline_forward(probe, sc.y, &sc.targets).loss;
  }, sc.sys.mask.flat_values(), grads.flat_grads(), eps);
  return {"pipeline_vjp", t.worst, t.count, eps, 0};
}

}  // namespace

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{"log_mel", "qr_vjp", "cov_vjp", "eig_chain_vjp", "ban", "apply",
                                            "power", "median", "mask_backward", "pipeline_vjp"};
  return ops;
}

TinyScene tiny_scene(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "tiny-scene"));
  TinyScene sc;
  StftConfig stft;
  stft.win_len = 8;
  stft.hop = 4;
  stft.dft_size = 8;
  sc.sys.stft = stft;
  sc.sys.mel = MelBank::build(stft, 3);
  sc.sys.mask_cfg.input_dim = stft.num_bins();
  sc.sys.mask_cfg.hidden_dims = {6};
  sc.sys.mask_cfg.seed = derive_seed(seed, "tiny-mask");
  sc.sys.mask = init_params(sc.sys.mask_cfg);
  for (const char* b : {"dense_b0", "dense_b1"})
    sc.sys.mask.mutable_value(b) = random_real(rng, 1, sc.sys.mask.value(b).cols(), -0.3, 0.3);

  sc.sys.am_cfg.n_features = 3;
  sc.sys.am_cfg.n_states = 3;
  sc.sys.am_cfg.context = 1;
  sc.sys.am_cfg.hidden_dims = {4};
  sc.sys.am_cfg.seed = derive_seed(seed, "tiny-am");
  sc.sys.am = am_init(sc.sys.am_cfg);
  sc.sys.am.mutable_value("feat_mean") = random_real(rng, 1, 3, -1.0, 1.0);
  sc.sys.am.mutable_value("feat_std") = random_real(rng, 1, 3, 1.0, 3.0);
  sc.sys.am.mutable_value("am_b0") = random_real(rng, 1, 4, -0.3, 0.3);
  sc.sys.am.freeze();

  sc.y = random_spec(rng, 2, 6, stft.num_bins(), stft);
  std::uniform_int_distribution<int> state(0, 2);
  for (int t = 0; t < 6; ++t) sc.targets.push_back(state(rng));
  return sc;
}

GradCheckReport finite_diff_check(const std::string& op, std::uint64_t seed, double eps) {
  require(eps > 0.0 && std::isfinite(eps), ErrorKind::kInvalidConfig, "finite-difference eps must be positive");
  Rng rng(derive_seed(seed, op));
  GradCheckReport r;
  if (op == "log_mel") r = check_log_mel(rng, eps);
  else if (op == "qr_vjp") r = check_qr(rng, eps);
  else if (op == "cov_vjp") r = check_cov(rng, eps);
  else if (op == "eig_chain_vjp") r = check_eig(rng, eps);
  else if (op == "ban") r = check_ban(rng, eps);
  else if (op == "apply") r = check_apply(rng, eps);
  else if (op == "power") r = check_power(rng, eps);
  else if (op == "median") r = check_median(rng, eps);
  else if (op == "mask_backward") r = check_mask_net(rng, eps, seed);
  else if (op == "pipeline_vjp") r = check_pipeline(eps, seed);
  else fail(ErrorKind::kNotFound, "no gradient check registered for op " + op);
  r.seed = seed;
  return r;
}

}  // namespace gevbf
