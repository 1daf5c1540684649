#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gevbf/linalg.hpp"
#include "gevbf/signal.hpp"

namespace gevbf {

enum class CovKind { kSpeech, kNoise };

// Per-bin M x M mask-weighted covariance set.
struct SpatialCovariance {
  std::vector<ComplexMatrix> phi;  // [F] of [M, M]
  CovKind kind = CovKind::kSpeech;
  std::vector<char> degenerate;    // bins whose mask summed to zero

  int bins() const { return static_cast<int>(phi.size()); }
  int channels() const { return phi.empty() ? 0 : static_cast<int>(phi.front().rows()); }
};

enum class DegeneratePolicy { kThrow, kFlag };

// Phi_f = sum_t m_{t,f} Y Y^H / sum_t m_{t,f}, symmetrized to exact Hermitian.
// mask is [T, F]. With kFlag, zero-sum bins yield a zero matrix and a flag
// instead of a degenerate-mask error.
SpatialCovariance spatial_covariance(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, CovKind kind,
                                     DegeneratePolicy policy = DegeneratePolicy::kThrow);

enum class WeightVariant { kGev, kOpt };

struct BeamformerWeights {
  std::vector<ComplexVector> w;  // [F] of [M]
  WeightVariant variant = WeightVariant::kGev;
  std::vector<double> ban_scale;  // [F], filled for kOpt
  std::vector<char> flagged;      // bins that fell back to a zero vector

  int bins() const { return static_cast<int>(w.size()); }
};

// Everything the reverse pass needs from one bin of the GEV computation.
struct GevBinRecord {
  ComplexMatrix phi;  // (Phi_NN + load I)^{-1} Phi_XX
  double load = 0.0;
  QrIterationRecord iters;
  PhaseFixed fixed;
  double eigval = 0.0;
  bool degenerate = false;
};

GevBinRecord gev_bin_forward(const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn, int k_iters, double loading);

// Per-bin principal generalized eigenvector through the QR iteration. Bins
// whose noise covariance cannot be factorized are flagged and get w = 0.
BeamformerWeights gev_vector(const SpatialCovariance& phi_xx, const SpatialCovariance& phi_nn,
                             int k_iters = kDefaultQrIterations, double loading = kDefaultLoading,
                             std::vector<GevBinRecord>* records = nullptr);

// Blind analytic normalization gain sqrt(w^H Pn Pn w / M) / (w^H Pn w).
// Sets *degenerate and returns 0 when the denominator vanishes.
double ban_gain(const ComplexVector& w, const ComplexMatrix& phi_nn, bool* degenerate = nullptr);

BeamformerWeights ban_scale(const BeamformerWeights& gev, const SpatialCovariance& phi_nn);

// S_{t,f} = w_f^H Y_{t,f}; returns [T, F].
Eigen::MatrixXcd apply_beamformer(const BeamformerWeights& w, const ComplexSpectrogram& y);

// Rayleigh quotient w^H Pxx w / w^H Pnn w; throws degenerate on a zero denominator.
double posterior_snr(const ComplexVector& w, const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn);

// Straightforward single-threaded versions of the bin-parallel kernels, kept
// as test references and benchmark baselines.
namespace serial {

SpatialCovariance spatial_covariance(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, CovKind kind,
                                     DegeneratePolicy policy = DegeneratePolicy::kThrow);
BeamformerWeights gev_vector(const SpatialCovariance& phi_xx, const SpatialCovariance& phi_nn,
                             int k_iters = kDefaultQrIterations, double loading = kDefaultLoading);
Eigen::MatrixXcd apply_beamformer(const BeamformerWeights& w, const ComplexSpectrogram& y);

}  // namespace serial

enum class BeamformerKind { kGevBan, kMvdr };

// GEV + BAN weights from a mask pair. The MVDR variant is accepted by the
// config layer but has no A_0 initialization yet and throws not-implemented.
BeamformerWeights mask_beamformer(const ComplexSpectrogram& y, const Eigen::MatrixXd& speech_mask,
                                  const Eigen::MatrixXd& noise_mask, int k_iters, double loading,
                                  BeamformerKind kind = BeamformerKind::kGevBan);

}  // namespace gevbf
