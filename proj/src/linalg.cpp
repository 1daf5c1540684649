#include "gevbf/linalg.hpp"

#include <cmath>
#include <string>

#include "gevbf/error.hpp"

namespace gevbf {

namespace {

void check_square_finite(const ComplexMatrix& a, const char* what) {
  require(a.rows() == a.cols(), ErrorKind::kShape,
          std::string(what) + ": expected a square matrix, got " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()));
  require(a.allFinite(), ErrorKind::kInvalidInput, std::string(what) + ": non-finite entries");
}

}  // namespace

QrFactors qr_decompose(const ComplexMatrix& a) {
  check_square_finite(a, "qr_decompose");
  const Eigen::Index n = a.rows();
  ComplexMatrix r = a;
  ComplexMatrix q = ComplexMatrix::Identity(n, n);

  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    const Eigen::Index len = n - j;
    ComplexVector x = r.block(j, j, len, 1);
    const double norm_x = x.norm();
    if (norm_x == 0.0) continue;
    const double abs_x0 = std::abs(x(0));
    const std::complex<double> phase = abs_x0 > 0.0 ? x(0) / abs_x0 : std::complex<double>(1.0, 0.0);
    const std::complex<double> alpha = -phase * norm_x;
    ComplexVector v = x;
    v(0) -= alpha;
    const double norm_v = v.norm();
    if (norm_v == 0.0) continue;
    v /= norm_v;
    // R <- H R, Q <- Q H with H = I - 2 v v^H
    r.bottomRightCorner(len, n - j) -= 2.0 * v * (v.adjoint() * r.bottomRightCorner(len, n - j));
    q.rightCols(len) -= 2.0 * (q.rightCols(len) * v) * v.adjoint();
  }

  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) r(i, j) = 0.0;
    const double mag = std::abs(r(j, j));
    if (mag == 0.0) continue;
    const std::complex<double> d = r(j, j) / mag;
    q.col(j) *= d;
    r.row(j) *= std::conj(d);
    r(j, j) = mag;
  }
  return {std::move(q), std::move(r)};
}

EigResult qr_algorithm(const ComplexMatrix& a0, int k_iters, QrIterationRecord* record) {
  check_square_finite(a0, "qr_algorithm");
  require(k_iters >= 1, ErrorKind::kInvalidConfig, "k_iters must be >= 1");
  const Eigen::Index n = a0.rows();
  EigResult res;
  res.k_iters = k_iters;
  res.a_final = a0;
  res.accum_q = ComplexMatrix::Identity(n, n);
  if (record) {
    record->a.assign(1, a0);
    record->q.clear();
    record->r.clear();
    record->accum.clear();
  }
  for (int k = 0; k < k_iters; ++k) {
    QrFactors f = qr_decompose(res.a_final);
    res.a_final = f.r * f.q;
    res.accum_q = res.accum_q * f.q;
    if (record) {
      record->a.push_back(res.a_final);
      record->q.push_back(std::move(f.q));
      record->r.push_back(std::move(f.r));
      record->accum.push_back(res.accum_q);
    }
  }
  return res;
}

PhaseFixed normalize_phase(const ComplexVector& v) {
  const double norm = v.norm();
  require(norm > 0.0, ErrorKind::kDegenerate, "cannot normalize a zero vector");
  PhaseFixed out;
  out.v = v / norm;
  Eigen::Index pivot = 0;
  out.v.cwiseAbs().maxCoeff(&pivot);
  out.pivot = static_cast<int>(pivot);
  const double mag = std::abs(out.v(pivot));
  out.v *= std::conj(out.v(pivot)) / mag;
  out.v(pivot) = mag;
  return out;
}

PrincipalPair principal_pair(const ComplexMatrix& phi, int k_iters) {
  require(k_iters >= 1, ErrorKind::kInvalidConfig, "k_iters must be >= 1");
  const EigResult res = qr_algorithm(phi, k_iters);
  const PhaseFixed fixed = normalize_phase(res.accum_q.col(0));
  return {res.a_final(0, 0).real(), fixed.v, fixed.pivot};
}

double loading_offset(const ComplexMatrix& phi, double loading) {
  return loading * phi.trace().real() / static_cast<double>(phi.rows());
}

ComplexMatrix hermitian_part(const ComplexMatrix& a) { return 0.5 * (a + a.adjoint()); }

ComplexMatrix herm_solve(const ComplexMatrix& phi, const ComplexMatrix& b, double loading) {
  check_square_finite(phi, "herm_solve");
  require(b.rows() == phi.rows(), ErrorKind::kShape, "herm_solve: right-hand side row mismatch");
  require(loading >= 0.0, ErrorKind::kInvalidConfig, "loading must be >= 0");
  const double scale = std::max(1.0, phi.cwiseAbs().maxCoeff());
  require((phi - phi.adjoint()).cwiseAbs().maxCoeff() <= 1e-8 * scale, ErrorKind::kInvalidInput,
          "herm_solve: matrix is not Hermitian");

  const Eigen::Index n = phi.rows();
  ComplexMatrix loaded = phi;
  loaded.diagonal().array() += loading_offset(phi, loading);
  Eigen::LLT<ComplexMatrix> llt(loaded);
  if (llt.info() != Eigen::Success) fail(ErrorKind::kSingularCovariance, "Cholesky factorization failed");
  const Eigen::VectorXd pivots = llt.matrixL().toDenseMatrix().diagonal().real();
  const double max_p = pivots.maxCoeff(), min_p = pivots.minCoeff();
  if (!(min_p > 0.0) || (min_p * min_p) < 1e-15 * (max_p * max_p))
    fail(ErrorKind::kSingularCovariance, "loaded covariance is numerically singular (n=" + std::to_string(n) + ")");
  return llt.solve(b);
}

}  // namespace gevbf
