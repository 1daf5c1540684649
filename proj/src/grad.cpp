#include "gevbf/grad.hpp"

#include <cmath>

#include "gevbf/error.hpp"

namespace gevbf {

namespace {

using cd = std::complex<double>;

void same_shape(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, what);
}

}  // namespace

// With X = Q^H dA R^{-1}, the phase convention pins Q^H dQ to
// tril(X,-1) - tril(X,-1)^H + i Im diag(X). Collecting terms gives
//   dL/dA = Q [R̄ R^H + tril(M - M^H, -1) + i Im diag(M)] R^{-H},
//   M = R R̄^H - Q̄^H Q.
ComplexMatrix qr_vjp(const ComplexMatrix& a, const ComplexMatrix& q, const ComplexMatrix& r,
                     const ComplexMatrix& q_bar, const ComplexMatrix& r_bar) {
  require(a.rows() == a.cols(), ErrorKind::kShape, "qr_vjp: a must be square");
  same_shape(a, q, "qr_vjp: q shape mismatch");
  same_shape(a, r, "qr_vjp: r shape mismatch");
  same_shape(a, q_bar, "qr_vjp: q_bar shape mismatch");
  same_shape(a, r_bar, "qr_vjp: r_bar shape mismatch");
  const Eigen::Index n = a.rows();

  const ComplexMatrix m = r * r_bar.adjoint() - q_bar.adjoint() * q;
  ComplexMatrix g = r_bar * r.adjoint();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) g(i, j) += m(i, j) - std::conj(m(j, i));
    g(j, j) += cd(0.0, m(j, j).imag());
  }
  const ComplexMatrix b = q * g;
  // a_bar = b R^{-H}  <=>  R a_bar^H = b^H
  return r.triangularView<Eigen::Upper>().solve(b.adjoint()).adjoint();
}

ComplexMatrix qr_algorithm_vjp(const QrIterationRecord& rec, const ComplexMatrix& accum_bar,
                               const ComplexMatrix& a_final_bar) {
  const int k_iters = static_cast<int>(rec.q.size());
  require(k_iters >= 1 && rec.a.size() == rec.q.size() + 1 && rec.r.size() == rec.q.size() &&
              rec.accum.size() == rec.q.size(),
          ErrorKind::kState, "qr_algorithm_vjp: incomplete forward record");
  ComplexMatrix a_bar = a_final_bar;
  ComplexMatrix p_bar = accum_bar;
  for (int k = k_iters - 1; k >= 0; --k) {
    const ComplexMatrix& q = rec.q[k];
    const ComplexMatrix& r = rec.r[k];
    // A_{k+1} = R_k Q_k, P_k = P_{k-1} Q_k
    ComplexMatrix q_bar = r.adjoint() * a_bar;
    if (k > 0) {
      q_bar += rec.accum[k - 1].adjoint() * p_bar;
    } else {
      q_bar += p_bar;
    }
    const ComplexMatrix r_bar = a_bar * q.adjoint();
    p_bar = (p_bar * q.adjoint()).eval();
    a_bar = qr_vjp(rec.a[k], q, r, q_bar, r_bar);
  }
  return a_bar;
}

ComplexVector normalize_phase_vjp(const ComplexVector& raw, const PhaseFixed& fixed, const ComplexVector& out_bar) {
  require(raw.size() == fixed.v.size() && out_bar.size() == raw.size(), ErrorKind::kShape,
          "normalize_phase_vjp: size mismatch");
  const double norm = raw.norm();
  const ComplexVector u = raw / norm;
  const cd z = u(fixed.pivot);
  const double mag = std::abs(z);
  const cd phase = std::conj(z) / mag;  // out = u * phase

  ComplexVector u_bar = out_bar * std::conj(phase);
  const cd phase_bar = u.dot(out_bar);  // u^H out_bar
  // phase = conj(s), s = z / |z|
  const cd s_bar = std::conj(phase_bar);
  const cd z_bar = s_bar / mag - (std::conj(s_bar) * z).real() * z / (mag * mag * mag);
  u_bar(fixed.pivot) += z_bar;
  // u = raw / |raw|
  return u_bar / norm - raw.dot(u_bar).real() * raw / (norm * norm * norm);
}

CovariancePairBar eig_chain_vjp(const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn, const GevBinRecord& rec,
                                double loading, const ComplexVector& w_bar) {
  const Eigen::Index n = phi_xx.rows();
  require(phi_nn.rows() == n && w_bar.size() == n, ErrorKind::kShape, "eig_chain_vjp: dimension mismatch");
  CovariancePairBar out{ComplexMatrix::Zero(n, n), ComplexMatrix::Zero(n, n)};
  if (rec.degenerate) return out;
  require(!rec.iters.q.empty(), ErrorKind::kState, "eig_chain_vjp: missing forward record");

  const ComplexVector raw = rec.iters.accum.back().col(0);
  ComplexMatrix accum_bar = ComplexMatrix::Zero(n, n);
  accum_bar.col(0) = normalize_phase_vjp(raw, rec.fixed, w_bar);
  const ComplexMatrix phi_bar = qr_algorithm_vjp(rec.iters, accum_bar, ComplexMatrix::Zero(n, n));

  // phi = S^{-1} Phi_XX with S = Phi_NN + load I Hermitian
  ComplexMatrix loaded = phi_nn;
  loaded.diagonal().array() += rec.load;
  const Eigen::LLT<ComplexMatrix> llt(loaded);
  const ComplexMatrix xx_bar = llt.solve(phi_bar);
  const ComplexMatrix s_bar = -xx_bar * rec.phi.adjoint();
  ComplexMatrix nn_bar = s_bar;
  nn_bar.diagonal().array() += s_bar.trace().real() * loading / static_cast<double>(n);

  out.phi_xx_bar = hermitian_part(xx_bar);
  out.phi_nn_bar = hermitian_part(nn_bar);
  return out;
}

CovariancePairBar eig_chain_vjp(const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn, int k_iters,
                                double loading, const ComplexVector& w_bar) {
  const GevBinRecord rec = gev_bin_forward(phi_xx, phi_nn, k_iters, loading);
  return eig_chain_vjp(phi_xx, phi_nn, rec, loading, w_bar);
}

Eigen::MatrixXd cov_vjp(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, const SpatialCovariance& cov,
                        const std::vector<ComplexMatrix>& phi_bar) {
  const int frames = y.frames(), bins = y.bins(), channels = y.channels();
  require(mask.rows() == frames && mask.cols() == bins, ErrorKind::kShape, "cov_vjp: mask shape mismatch");
  require(static_cast<int>(phi_bar.size()) == bins && cov.bins() == bins, ErrorKind::kShape,
          "cov_vjp: cotangent bin count mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(frames, bins);
  const Eigen::RowVectorXd sums = mask.colwise().sum();
  for (int f = 0; f < bins; ++f) {
    if (!cov.degenerate.empty() && cov.degenerate[f]) continue;
    require(sums(f) > 0.0, ErrorKind::kDegenerateMask, "cov_vjp: mask sums to zero in bin " + std::to_string(f));
    require(phi_bar[f].rows() == channels && phi_bar[f].cols() == channels, ErrorKind::kShape,
            "cov_vjp: cotangent matrix shape");
    const ComplexMatrix g = hermitian_part(phi_bar[f]);
    // <g, Phi> = Re tr(g^H Phi)
    const double base = (g.conjugate().cwiseProduct(cov.phi[f])).sum().real();
    for (int t = 0; t < frames; ++t) {
      const ComplexVector obs = y.observation(t, f);
      const double quad = obs.dot(g.adjoint() * obs).real();
      out(t, f) = (quad - base) / sums(f);
    }
  }
  return out;
}

Eigen::MatrixXd cov_vjp(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask,
                        const std::vector<ComplexMatrix>& phi_bar) {
  const SpatialCovariance cov = spatial_covariance(y, mask, CovKind::kSpeech);
  return cov_vjp(y, mask, cov, phi_bar);
}

BanBar ban_vjp(const ComplexVector& w, const ComplexMatrix& phi_nn, const ComplexVector& w_opt_bar) {
  const Eigen::Index n = w.size();
  require(phi_nn.rows() == n && phi_nn.cols() == n && w_opt_bar.size() == n, ErrorKind::kShape,
          "ban_vjp: dimension mismatch");
  bool degenerate = false;
  const double g = ban_gain(w, phi_nn, &degenerate);
  BanBar out{ComplexVector::Zero(n), ComplexMatrix::Zero(n, n)};
  if (degenerate) return out;

  out.w_bar = g * w_opt_bar;
  const ComplexVector u = phi_nn * w;
  const double num = u.squaredNorm();
  const double den = w.dot(u).real();
  if (num <= 0.0) return out;
  const double g_bar = w.dot(w_opt_bar).real();
  // g = sqrt(num / M) / den
  const double num_bar = g_bar * g / (2.0 * num);
  const double den_bar = -g_bar * g / den;
  // num = |Pn w|^2
  const ComplexVector u_bar = 2.0 * num_bar * u;
  out.w_bar += phi_nn.adjoint() * u_bar;
  out.phi_nn_bar += u_bar * w.adjoint();
  // den = Re(w^H Pn w)
  out.w_bar += den_bar * (phi_nn * w + phi_nn.adjoint() * w);
  out.phi_nn_bar += den_bar * w * w.adjoint();
  return out;
}

std::vector<ComplexVector> apply_vjp(const ComplexSpectrogram& y, const Eigen::MatrixXcd& s_bar) {
  require(s_bar.rows() == y.frames() && s_bar.cols() == y.bins(), ErrorKind::kShape, "apply_vjp: shape mismatch");
  std::vector<ComplexVector> out(y.bins(), ComplexVector::Zero(y.channels()));
  for (int f = 0; f < y.bins(); ++f)
    for (int t = 0; t < y.frames(); ++t)
      for (int m = 0; m < y.channels(); ++m) out[f](m) += y(m, t, f) * std::conj(s_bar(t, f));
  return out;
}

Eigen::MatrixXd power_spectrum(const Eigen::MatrixXcd& s) { return s.cwiseAbs2(); }

Eigen::MatrixXcd power_spectrum_vjp(const Eigen::MatrixXcd& s, const Eigen::MatrixXd& p_bar) {
  require(s.rows() == p_bar.rows() && s.cols() == p_bar.cols(), ErrorKind::kShape, "power_vjp: shape mismatch");
  return 2.0 * s.cwiseProduct(p_bar.cast<cd>());
}

}  // namespace gevbf
