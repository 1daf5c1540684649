#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gevbf/beamform.hpp"
#include "gevbf/linalg.hpp"
#include "gevbf/signal.hpp"

// Vector-Jacobian products for every stage between the beamformer output and
// the masks. Complex cotangents follow the real-pair convention: for z = a + ib
// the cotangent is dL/da + i dL/db.
namespace gevbf {

// Reverse pass of the phase-fixed QR map at full rank.
ComplexMatrix qr_vjp(const ComplexMatrix& a, const ComplexMatrix& q, const ComplexMatrix& r,
                     const ComplexMatrix& q_bar, const ComplexMatrix& r_bar);

// Reverse pass through the recorded unshifted iteration; returns dL/dA_0.
ComplexMatrix qr_algorithm_vjp(const QrIterationRecord& rec, const ComplexMatrix& accum_bar,
                               const ComplexMatrix& a_final_bar);

// Reverse pass of v -> normalize_phase(v).
ComplexVector normalize_phase_vjp(const ComplexVector& raw, const PhaseFixed& fixed, const ComplexVector& out_bar);

struct CovariancePairBar {
  ComplexMatrix phi_xx_bar;
  ComplexMatrix phi_nn_bar;
};

// Cotangents of the Hermitian covariance pair given a cotangent on the
// phase-fixed principal eigenvector of (Phi_NN + load I)^{-1} Phi_XX.
// Both results are Hermitian (cotangents with respect to a Hermitian argument).
CovariancePairBar eig_chain_vjp(const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn, const GevBinRecord& rec,
                                double loading, const ComplexVector& w_bar);

// Same, recomputing the forward record internally.
CovariancePairBar eig_chain_vjp(const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn, int k_iters,
                                double loading, const ComplexVector& w_bar);

// dL/dmask [T, F] for the normalized mask-weighted covariance.
Eigen::MatrixXd cov_vjp(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, const SpatialCovariance& cov,
                        const std::vector<ComplexMatrix>& phi_bar);
Eigen::MatrixXd cov_vjp(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask,
                        const std::vector<ComplexMatrix>& phi_bar);

struct BanBar {
  ComplexVector w_bar;
  ComplexMatrix phi_nn_bar;
};

// Reverse pass of w_opt = ban_gain(w, Phi_NN) * w. The gain's subgradient is
// taken as zero where the numerator vanishes or the bin is degenerate.
BanBar ban_vjp(const ComplexVector& w, const ComplexMatrix& phi_nn, const ComplexVector& w_opt_bar);

// dL/dw_f for S = w^H Y, given dL/dS [T, F].
std::vector<ComplexVector> apply_vjp(const ComplexSpectrogram& y, const Eigen::MatrixXcd& s_bar);

// |S|^2 elementwise and its reverse pass.
Eigen::MatrixXd power_spectrum(const Eigen::MatrixXcd& s);
Eigen::MatrixXcd power_spectrum_vjp(const Eigen::MatrixXcd& s, const Eigen::MatrixXd& p_bar);

}  // namespace gevbf
