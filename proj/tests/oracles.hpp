#pragma once

// Test-only reference computations. Nothing here calls into the library's
// numerical kernels.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cd = std::complex<double>;
using Rng = std::mt19937_64;

inline Eigen::MatrixXcd random_complex(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cd(n(rng), n(rng));
  return m;
}

inline Eigen::VectorXcd random_unit(Rng& rng, Eigen::Index n) {
  Eigen::VectorXcd v = random_complex(rng, n, 1);
  return v / v.norm();
}

// Sum of `dof` random outer products plus a small ridge.
inline Eigen::MatrixXcd random_psd(Rng& rng, Eigen::Index n, Eigen::Index dof, double ridge = 1e-2) {
  const Eigen::MatrixXcd a = random_complex(rng, n, dof);
  Eigen::MatrixXcd p = a * a.adjoint() / static_cast<double>(dof);
  p.diagonal().array() += ridge;
  return 0.5 * (p + p.adjoint());
}

// Speech-like pair: strong rank-1 component over a full-rank floor, against a
// random full-rank noise covariance.
struct CovPair {
  Eigen::MatrixXcd xx;
  Eigen::MatrixXcd nn;
};
inline CovPair random_pair(Rng& rng, Eigen::Index n) {
  const Eigen::VectorXcd d = random_complex(rng, n, 1);
  CovPair p;
  p.xx = 4.0 * d * d.adjoint() + random_psd(rng, n, n + 2, 0.05);
  p.xx = 0.5 * (p.xx + p.xx.adjoint());
  p.nn = random_psd(rng, n, 2 * n + 2, 0.1);
  return p;
}

// Direct O(N^2) DFT of a real sequence, bins 0..N/2.
inline std::vector<cd> direct_rdft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cd> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    cd acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

inline double blackman(int i, int n) {
  const double x = 2.0 * std::numbers::pi * i / n;
  return 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
}

// Central difference of f along x[i].
inline double central_diff(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                           std::size_t i, double eps) {
  const double x0 = x[i];
  x[i] = x0 + eps;
  const double fp = f(x);
  x[i] = x0 - eps;
  const double fm = f(x);
  return (fp - fm) / (2.0 * eps);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Real inner product <a, b> = Re tr(a^H b).
inline Eigen::MatrixXd random_real(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// Max per-entry relative error of `analytic` against central differences of f
// over every coordinate of x.
inline double fd_check_vector(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& analytic, double eps) {
  double worst = 0.0;
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    p(i) = x(i) + eps;
    const double fp = f(p);
    p(i) = x(i) - eps;
    const double fm = f(p);
    p(i) = x(i);
    worst = std::max(worst, rel_err(analytic(i), (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

// Sorting-based median of one cell.
inline double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

inline double inner(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a.conjugate().cwiseProduct(b)).sum().real();
}

// Largest relative error between an analytic complex cotangent and central
// differences of f over the real and imaginary part of every entry.
inline double fd_check_complex(const std::function<double(const Eigen::MatrixXcd&)>& f, const Eigen::MatrixXcd& x,
                               const Eigen::MatrixXcd& analytic, double eps) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (const cd dir : {cd(1.0, 0.0), cd(0.0, 1.0)}) {
        Eigen::MatrixXcd xp = x, xm = x;
        xp(i, j) += eps * dir;
        xm(i, j) -= eps * dir;
        const double numeric = (f(xp) - f(xm)) / (2.0 * eps);
        const double exact = dir.real() != 0.0 ? analytic(i, j).real() : analytic(i, j).imag();
        worst = std::max(worst, rel_err(exact, numeric));
      }
    }
  }
  return worst;
}

// Same over the real degrees of freedom of a Hermitian matrix: each diagonal
// entry, and the real and imaginary parts of each upper entry moved together
// with its mirror. `analytic` must be Hermitian.
inline double fd_check_hermitian(const std::function<double(const Eigen::MatrixXcd&)>& f, const Eigen::MatrixXcd& x,
                                 const Eigen::MatrixXcd& analytic, double eps) {
  double worst = 0.0;
  const Eigen::Index n = x.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      for (const cd dir : {cd(1.0, 0.0), cd(0.0, 1.0)}) {
        if (i == j && dir.imag() != 0.0) continue;
        Eigen::MatrixXcd e = Eigen::MatrixXcd::Zero(n, n);
        e(i, j) = dir;
        e(j, i) = std::conj(dir);
        if (i == j) e(i, i) = 1.0;
        const double numeric = (f(x + eps * e) - f(x - eps * e)) / (2.0 * eps);
        worst = std::max(worst, rel_err(inner(analytic, e), numeric));
      }
    }
  }
  return worst;
}

// Eigenpairs of a 2x2 or 3x3 matrix with real spectrum through the
// characteristic polynomial; eigenvectors from the null space of (A - lambda I).
struct EigPair {
  double value;
  Eigen::VectorXcd vector;
};

inline std::vector<double> charpoly_roots(const Eigen::MatrixXcd& a) {
  if (a.rows() == 2) {
    const cd tr = a.trace(), det = a.determinant();
    const cd disc = std::sqrt(tr * tr - 4.0 * det);
    std::vector<double> r{((tr + disc) / 2.0).real(), ((tr - disc) / 2.0).real()};
    std::sort(r.rbegin(), r.rend());
    return r;
  }
  // lambda^3 + b lambda^2 + c lambda + d with real coefficients for a real spectrum
  const double b = -a.trace().real();
  const double c = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0) +
                    a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)).real();
  const double d = -a.determinant().real();
  const double p = c - b * b / 3.0;
  const double q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
  std::vector<double> r(3);
  const double m = 2.0 * std::sqrt(std::max(-p / 3.0, 0.0));
  const double arg = std::clamp(3.0 * q / (p * m) , -1.0, 1.0);
  const double theta = std::acos(arg) / 3.0;
  for (int k = 0; k < 3; ++k) r[k] = m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) - b / 3.0;
  std::sort(r.rbegin(), r.rend());
  return r;
}

inline Eigen::VectorXcd null_vector(const Eigen::MatrixXcd& a, double lambda) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXcd s = a;
  s.diagonal().array() -= lambda;
  Eigen::VectorXcd best;
  double best_norm = -1.0;
  if (n == 2) {
    const Eigen::Vector2cd c1(s(0, 1), -s(0, 0));
    const Eigen::Vector2cd c2(s(1, 1), -s(1, 0));
    for (const Eigen::VectorXcd& c : {Eigen::VectorXcd(c1), Eigen::VectorXcd(c2)})
      if (c.norm() > best_norm) best = c, best_norm = c.norm();
  } else {
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      const Eigen::Vector3cd ri = s.row(i).transpose(), rj = s.row(j).transpose();
      const Eigen::Vector3cd c(ri(1) * rj(2) - ri(2) * rj(1), ri(2) * rj(0) - ri(0) * rj(2),
                               ri(0) * rj(1) - ri(1) * rj(0));
      if (c.norm() > best_norm) best = c, best_norm = c.norm();
    }
  }
  return best / best.norm();
}

inline EigPair principal_eig(const Eigen::MatrixXcd& a) {
  const double lambda = charpoly_roots(a).front();
  return {lambda, null_vector(a, lambda)};
}

inline double cosine(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

}  // namespace oracle
