#include <cmath>

#include "doctest.h"
#include "gevbf/beamform.hpp"
#include "gevbf/error.hpp"
#include "gevbf/grad.hpp"
#include "oracles.hpp"

using namespace gevbf;
using oracle::inner;

namespace {

ComplexSpectrogram random_spec(oracle::Rng& rng, int m, int t, int f) {
  ComplexSpectrogram y(m, t, f);
  const ComplexMatrix r = oracle::random_complex(rng, m * t, f);
  for (int c = 0; c < m; ++c)
    for (int i = 0; i < t; ++i)
      for (int k = 0; k < f; ++k) y(c, i, k) = r(c * t + i, k);
  return y;
}

Eigen::MatrixXd random_mask(oracle::Rng& rng, int t, int f) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd m(t, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("qr_vjp: zero cotangent gives zero") {
  oracle::Rng rng(1);
  const ComplexMatrix a = oracle::random_complex(rng, 3, 3);
  const auto f = qr_decompose(a);
  const ComplexMatrix z = ComplexMatrix::Zero(3, 3);
  CHECK(qr_vjp(a, f.q, f.r, z, z).norm() == 0.0);
}

TEST_CASE("qr_vjp matches central differences on random matrices") {
  for (int n : {2, 3, 4}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      oracle::Rng rng(1000 * n + seed);
      const ComplexMatrix a = oracle::random_complex(rng, n, n);
      const ComplexMatrix qc = oracle::random_complex(rng, n, n);
      const ComplexMatrix rc = oracle::random_complex(rng, n, n);
      const auto fq = qr_decompose(a);
      const ComplexMatrix analytic = qr_vjp(a, fq.q, fq.r, qc, rc);
      const auto loss = [&](const ComplexMatrix& x) {
        const auto g = qr_decompose(x);
        return inner(qc, g.q) + inner(rc, g.r);
      };
      CHECK(oracle::fd_check_complex(loss, a, analytic, 1e-6) < 1e-5);
    }
  }
}

TEST_CASE("qr_vjp at the identity with r_bar = I") {
  const ComplexMatrix a = ComplexMatrix::Identity(3, 3);
  const ComplexMatrix rc = ComplexMatrix::Identity(3, 3);
  const ComplexMatrix qc = ComplexMatrix::Zero(3, 3);
  const auto fq = qr_decompose(a);
  const ComplexMatrix analytic = qr_vjp(a, fq.q, fq.r, qc, rc);
  const auto loss = [&](const ComplexMatrix& x) { return inner(rc, qr_decompose(x).r); };
  CHECK(oracle::fd_check_complex(loss, a, analytic, 1e-6) < 1e-5);
}

TEST_CASE("qr_algorithm_vjp matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    oracle::Rng rng(77 + seed);
    const auto pair = oracle::random_pair(rng, 3);
    const ComplexMatrix a0 = pair.nn.lu().solve(pair.xx);
    const ComplexMatrix pc = oracle::random_complex(rng, 3, 3);
    const ComplexMatrix ac = oracle::random_complex(rng, 3, 3);
    QrIterationRecord rec;
    qr_algorithm(a0, 5, &rec);
    const ComplexMatrix analytic = qr_algorithm_vjp(rec, pc, ac);
    const auto loss = [&](const ComplexMatrix& x) {
      const auto res = qr_algorithm(x, 5);
      return inner(pc, res.accum_q) + inner(ac, res.a_final);
    };
    CHECK(oracle::fd_check_complex(loss, a0, analytic, 1e-6) < 1e-5);
  }
}

TEST_CASE("qr_algorithm_vjp rejects an empty record") {
  QrIterationRecord rec;
  try {
    qr_algorithm_vjp(rec, ComplexMatrix::Zero(2, 2), ComplexMatrix::Zero(2, 2));
    FAIL("expected state-error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kState);
  }
}

TEST_CASE("normalize_phase_vjp matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    oracle::Rng rng(seed);
    const ComplexMatrix v = oracle::random_complex(rng, 4, 1);
    const ComplexMatrix c = oracle::random_complex(rng, 4, 1);
    const auto fixed = normalize_phase(v.col(0));
    const ComplexMatrix analytic = normalize_phase_vjp(v.col(0), fixed, c.col(0));
    const auto loss = [&](const ComplexMatrix& x) { return inner(c, normalize_phase(x.col(0)).v); };
    CHECK(oracle::fd_check_complex(loss, v, analytic, 1e-6) < 1e-6);
  }
}

TEST_CASE("eig_chain_vjp: zero cotangent") {
  oracle::Rng rng(3);
  const auto pair = oracle::random_pair(rng, 3);
  const auto bar = eig_chain_vjp(pair.xx, pair.nn, 5, 1e-6, ComplexVector::Zero(3));
  CHECK(bar.phi_xx_bar.norm() == 0.0);
  CHECK(bar.phi_nn_bar.norm() == 0.0);
}

TEST_CASE("eig_chain_vjp matches finite differences of the composite") {
  for (int n : {2, 3, 6}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      oracle::Rng rng(500 * n + seed);
      const auto pair = oracle::random_pair(rng, n);
      const ComplexVector wc = oracle::random_complex(rng, n, 1);
      const double loading = 1e-3;
      const auto bar = eig_chain_vjp(pair.xx, pair.nn, 5, loading, wc);
      const auto through_xx = [&](const ComplexMatrix& x) {
        return inner(wc, principal_pair(herm_solve(pair.nn, x, loading), 5).eigvec);
      };
      const auto through_nn = [&](const ComplexMatrix& x) {
        return inner(wc, principal_pair(herm_solve(x, pair.xx, loading), 5).eigvec);
      };
      const double eps_xx = 1e-5 * pair.xx.cwiseAbs().maxCoeff();
      const double eps_nn = 1e-5 * pair.nn.cwiseAbs().maxCoeff();
      CHECK(oracle::fd_check_hermitian(through_xx, pair.xx, bar.phi_xx_bar, eps_xx) < 1e-4);
      CHECK(oracle::fd_check_hermitian(through_nn, pair.nn, bar.phi_nn_bar, eps_nn) < 1e-4);
    }
  }
}

TEST_CASE("eig_chain_vjp is orthogonal to the speech scaling ray") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    oracle::Rng rng(40 + seed);
    const auto pair = oracle::random_pair(rng, 3);
    const ComplexVector wc = oracle::random_complex(rng, 3, 1);
    const auto bar = eig_chain_vjp(pair.xx, pair.nn, 5, 1e-6, wc);
    const auto along = [&](double s) {
      return inner(wc, principal_pair(herm_solve(pair.nn, s * pair.xx, 1e-6), 5).eigvec);
    };
    const double eps = 1e-4;
    const double numeric = (along(1.0 + eps) - along(1.0 - eps)) / (2.0 * eps);
    CHECK(std::abs(numeric) < 1e-9);
    CHECK(std::abs(inner(bar.phi_xx_bar, pair.xx)) < 1e-9 * bar.phi_xx_bar.norm() * pair.xx.norm());
  }
}

TEST_CASE("cov_vjp: zero cotangent, finite differences, degenerate mask") {
  oracle::Rng rng(12);
  const auto y = random_spec(rng, 2, 3, 4);
  const Eigen::MatrixXd mask = random_mask(rng, 3, 4);
  std::vector<ComplexMatrix> zero(4, ComplexMatrix::Zero(2, 2));
  CHECK(cov_vjp(y, mask, zero).cwiseAbs().maxCoeff() == 0.0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    oracle::Rng r2(seed);
    const auto ys = random_spec(r2, 2, 3, 4);
    const Eigen::MatrixXd ms = random_mask(r2, 3, 4);
    std::vector<ComplexMatrix> cot(4);
    for (auto& c : cot) c = oracle::random_complex(r2, 2, 2);
    const Eigen::MatrixXd analytic = cov_vjp(ys, ms, cot);
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
      for (int f = 0; f < 4; ++f) {
        const auto loss = [&](double delta) {
          Eigen::MatrixXd m = ms;
          m(t, f) += delta;
          const auto cov = spatial_covariance(ys, m, CovKind::kSpeech);
          double acc = 0.0;
          for (int k = 0; k < 4; ++k) acc += inner(cot[k], cov.phi[k]);
          return acc;
        };
        const double eps = 1e-5 * ms(t, f);
        worst = std::max(worst, oracle::rel_err(analytic(t, f), (loss(eps) - loss(-eps)) / (2 * eps)));
      }
    }
    CHECK(worst < 1e-6);
  }

  Eigen::MatrixXd dead = mask;
  dead.col(2).setZero();
  try {
    cov_vjp(y, dead, zero);
    FAIL("expected degenerate-mask");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateMask);
  }
}

TEST_CASE("cov_vjp hand-expanded T=2 uniform mask with identity cotangent") {
  oracle::Rng rng(8);
  const auto y = random_spec(rng, 3, 2, 1);
  const Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(2, 1);
  const std::vector<ComplexMatrix> cot{ComplexMatrix::Identity(3, 3)};
  const Eigen::MatrixXd g = cov_vjp(y, mask, cot);
  const double e1 = y.observation(0, 0).squaredNorm(), e2 = y.observation(1, 0).squaredNorm();
  CHECK(g(0, 0) == doctest::Approx((e1 - e2) / 4.0).epsilon(1e-13));
  CHECK(g(1, 0) == doctest::Approx((e2 - e1) / 4.0).epsilon(1e-13));
}

TEST_CASE("ban_vjp matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    oracle::Rng rng(900 + seed);
    const int n = 2 + static_cast<int>(seed % 5);
    const ComplexMatrix w = oracle::random_complex(rng, n, 1);
    const ComplexMatrix pn = oracle::random_psd(rng, n, n + 3, 0.1);
    const ComplexMatrix c = oracle::random_complex(rng, n, 1);
    const auto bar = ban_vjp(w.col(0), pn, c.col(0));
    const auto via_w = [&](const ComplexMatrix& x) { return inner(c, ban_gain(x.col(0), pn) * x); };
    const auto via_nn = [&](const ComplexMatrix& x) { return inner(c, ban_gain(w.col(0), x) * w); };
    CHECK(oracle::fd_check_complex(via_w, w, ComplexMatrix(bar.w_bar), 1e-5 * w.cwiseAbs().maxCoeff()) < 1e-6);
    CHECK(oracle::fd_check_hermitian(via_nn, pn, hermitian_part(bar.phi_nn_bar), 1e-5 * pn.cwiseAbs().maxCoeff()) <
          1e-6);
  }
}

TEST_CASE("apply_vjp and power_spectrum_vjp match central differences") {
  oracle::Rng rng(31);
  const auto y = random_spec(rng, 3, 4, 2);
  BeamformerWeights w;
  for (int f = 0; f < 2; ++f) w.w.push_back(oracle::random_complex(rng, 3, 1).col(0));
  const ComplexMatrix s_bar = oracle::random_complex(rng, 4, 2);
  const auto grads = apply_vjp(y, s_bar);
  for (int f = 0; f < 2; ++f) {
    const auto loss = [&](const ComplexMatrix& x) {
      BeamformerWeights v = w;
      v.w[f] = x.col(0);
      return inner(s_bar, apply_beamformer(v, y));
    };
    CHECK(oracle::fd_check_complex(loss, ComplexMatrix(w.w[f]), ComplexMatrix(grads[f]), 1e-6) < 1e-7);
  }

  const ComplexMatrix s = oracle::random_complex(rng, 3, 3);
  const Eigen::MatrixXd p_bar = Eigen::MatrixXd::Random(3, 3);
  const auto loss = [&](const ComplexMatrix& x) { return (p_bar.array() * power_spectrum(x).array()).sum(); };
  CHECK(oracle::fd_check_complex(loss, s, power_spectrum_vjp(s, p_bar), 1e-6) < 1e-7);
}
