#pragma once

#include <vector>

#include <Eigen/Dense>

namespace gevbf {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr int kDefaultQrIterations = 5;

// A = Q R with Q unitary, R upper triangular and diag(R) real >= 0.
struct QrFactors {
  ComplexMatrix q;
  ComplexMatrix r;
};

struct EigResult {
  ComplexMatrix a_final;  // A_K
  ComplexMatrix accum_q;  // Q_0 Q_1 ... Q_{K-1}
  int k_iters = 0;
};

// Intermediates of the unshifted iteration, retained for the reverse pass.
// a has k_iters + 1 entries (A_0 .. A_K); q and r have k_iters entries.
struct QrIterationRecord {
  std::vector<ComplexMatrix> a;
  std::vector<ComplexMatrix> q;
  std::vector<ComplexMatrix> r;
  std::vector<ComplexMatrix> accum;  // P_k = Q_0 ... Q_k
};

// Householder QR of a square matrix followed by the column phase rotation
// that makes diag(R) real and nonnegative.
QrFactors qr_decompose(const ComplexMatrix& a);

// A_{k+1} = R_k Q_k for k = 0 .. k_iters-1, no shifts and no deflation.
// The product accumulates exactly the k_iters Q factors that were computed.
EigResult qr_algorithm(const ComplexMatrix& a0, int k_iters, QrIterationRecord* record = nullptr);

// Unit-norm vector rotated so its largest-magnitude entry is real >= 0.
struct PhaseFixed {
  ComplexVector v;
  int pivot = 0;  // index of the entry made real
};
PhaseFixed normalize_phase(const ComplexVector& v);

struct PrincipalPair {
  double eigval = 0.0;
  ComplexVector eigvec;
  int pivot = 0;
};

// Dominant eigenpair estimate after k_iters QR iterations started from phi.
PrincipalPair principal_pair(const ComplexMatrix& phi, int k_iters = kDefaultQrIterations);

inline constexpr double kDefaultLoading = 1e-6;

// The diagonal load actually applied: loading * Re(tr(phi)) / n.
double loading_offset(const ComplexMatrix& phi, double loading);

// (phi + loading * tr(phi)/n * I)^{-1} b via Cholesky; phi must be Hermitian.
// Throws singular-covariance if the loaded matrix is not positive definite.
ComplexMatrix herm_solve(const ComplexMatrix& phi, const ComplexMatrix& b, double loading);

// (a + a^H) / 2
ComplexMatrix hermitian_part(const ComplexMatrix& a);

}  // namespace gevbf
