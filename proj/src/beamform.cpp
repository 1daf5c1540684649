#include "gevbf/beamform.hpp"

#include <cmath>
#include <exception>
#include <string>

#include "gevbf/error.hpp"

namespace gevbf {

namespace {

void check_mask(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask) {
  require(mask.rows() == y.frames() && mask.cols() == y.bins(), ErrorKind::kShape,
          "mask shape [" + std::to_string(mask.rows()) + ", " + std::to_string(mask.cols()) +
              "] does not match spectrogram [" + std::to_string(y.frames()) + ", " + std::to_string(y.bins()) + "]");
  require(mask.allFinite() && mask.minCoeff() >= 0.0 && mask.maxCoeff() <= 1.0, ErrorKind::kInvalidInput,
          "mask entries must lie in [0, 1]");
}

void check_pair(const SpatialCovariance& a, const SpatialCovariance& b) {
  require(a.bins() == b.bins() && a.channels() == b.channels(), ErrorKind::kShape,
          "speech and noise covariances disagree in F or M");
}

bool bin_flagged(const SpatialCovariance& c, int f) {
  return !c.degenerate.empty() && c.degenerate[f] != 0;
}

// Phi_f for one bin as Y diag(m) Y^H over the [M, T] bin slice.
ComplexMatrix covariance_bin(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, int f, double mask_sum) {
  const int channels = y.channels(), frames = y.frames();
  Eigen::MatrixXcd slice(channels, frames);
  for (int m = 0; m < channels; ++m)
    for (int t = 0; t < frames; ++t) slice(m, t) = y(m, t, f);
  const Eigen::MatrixXcd weighted = slice * mask.col(f).cast<cdouble>().asDiagonal();
  return hermitian_part(weighted * slice.adjoint() / mask_sum);
}

}  // namespace

SpatialCovariance spatial_covariance(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, CovKind kind,
                                     DegeneratePolicy policy) {
  check_mask(y, mask);
  const int bins = y.bins(), channels = y.channels();
  SpatialCovariance out;
  out.kind = kind;
  out.phi.assign(bins, ComplexMatrix::Zero(channels, channels));
  out.degenerate.assign(bins, 0);
  const Eigen::RowVectorXd sums = mask.colwise().sum();
  for (int f = 0; f < bins; ++f) {
    if (sums(f) > 0.0) continue;
    if (policy == DegeneratePolicy::kThrow)
      fail(ErrorKind::kDegenerateMask, "mask sums to zero in bin " + std::to_string(f));
    out.degenerate[f] = 1;
  }
#pragma omp parallel for schedule(static)
  for (int f = 0; f < bins; ++f) {
    if (out.degenerate[f]) continue;
    out.phi[f] = covariance_bin(y, mask, f, sums(f));
  }
  return out;
}

GevBinRecord gev_bin_forward(const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn, int k_iters, double loading) {
  GevBinRecord rec;
  rec.load = loading_offset(phi_nn, loading);
  try {
    rec.phi = herm_solve(phi_nn, phi_xx, loading);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kSingularCovariance) throw;
    rec.degenerate = true;
    return rec;
  }
  const EigResult res = qr_algorithm(rec.phi, k_iters, &rec.iters);
  rec.fixed = normalize_phase(res.accum_q.col(0));
  rec.eigval = res.a_final(0, 0).real();
  return rec;
}

BeamformerWeights gev_vector(const SpatialCovariance& phi_xx, const SpatialCovariance& phi_nn, int k_iters,
                             double loading, std::vector<GevBinRecord>* records) {
  check_pair(phi_xx, phi_nn);
  require(k_iters >= 1, ErrorKind::kInvalidConfig, "k_iters must be >= 1");
  require(loading >= 0.0, ErrorKind::kInvalidConfig, "loading must be >= 0");
  const int bins = phi_xx.bins(), channels = phi_xx.channels();
  BeamformerWeights out;
  out.variant = WeightVariant::kGev;
  out.w.assign(bins, ComplexVector::Zero(channels));
  out.flagged.assign(bins, 0);
  std::vector<GevBinRecord> local(records ? bins : 0);
  std::exception_ptr error;

#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < bins; ++f) {
    if (bin_flagged(phi_xx, f) || bin_flagged(phi_nn, f)) {
      out.flagged[f] = 1;
      if (records) local[f].degenerate = true;
      continue;
    }
    try {
      GevBinRecord rec = gev_bin_forward(phi_xx.phi[f], phi_nn.phi[f], k_iters, loading);
      if (rec.degenerate) {
        out.flagged[f] = 1;
      } else {
        out.w[f] = rec.fixed.v;
      }
      if (records) local[f] = std::move(rec);
    } catch (...) {
#pragma omp critical(gev_vector_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  if (records) *records = std::move(local);
  return out;
}

double ban_gain(const ComplexVector& w, const ComplexMatrix& phi_nn, bool* degenerate) {
  require(w.size() == phi_nn.rows() && phi_nn.rows() == phi_nn.cols(), ErrorKind::kShape, "ban: dimension mismatch");
  const ComplexVector u = phi_nn * w;
  const double num = u.squaredNorm();
  const double den = w.dot(u).real();
  if (!(den > 0.0)) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return std::sqrt(num / static_cast<double>(w.size())) / den;
}

BeamformerWeights ban_scale(const BeamformerWeights& gev, const SpatialCovariance& phi_nn) {
  require(gev.bins() == phi_nn.bins(), ErrorKind::kShape, "ban: bin count mismatch");
  BeamformerWeights out;
  out.variant = WeightVariant::kOpt;
  const int bins = gev.bins();
  out.w.resize(bins);
  out.ban_scale.assign(bins, 0.0);
  out.flagged = gev.flagged.empty() ? std::vector<char>(bins, 0) : gev.flagged;
  for (int f = 0; f < bins; ++f) {
    bool degenerate = false;
    const double g = out.flagged[f] ? 0.0 : ban_gain(gev.w[f], phi_nn.phi[f], &degenerate);
    if (degenerate) out.flagged[f] = 1;
    out.ban_scale[f] = g;
    out.w[f] = g * gev.w[f];
  }
  return out;
}

Eigen::MatrixXcd apply_beamformer(const BeamformerWeights& w, const ComplexSpectrogram& y) {
  require(w.bins() == y.bins(), ErrorKind::kShape, "beamformer bin count mismatch");
  const int frames = y.frames(), bins = y.bins(), channels = y.channels();
  for (const auto& v : w.w) require(v.size() == channels, ErrorKind::kShape, "beamformer channel mismatch");
  Eigen::MatrixXcd out(frames, bins);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < bins; ++f) {
    for (int t = 0; t < frames; ++t) {
      cdouble acc = 0.0;
      for (int m = 0; m < channels; ++m) acc += std::conj(w.w[f](m)) * y(m, t, f);
      out(t, f) = acc;
    }
  }
  return out;
}

double posterior_snr(const ComplexVector& w, const ComplexMatrix& phi_xx, const ComplexMatrix& phi_nn) {
  require(w.size() == phi_xx.rows() && w.size() == phi_nn.rows(), ErrorKind::kShape, "posterior_snr: dims");
  const double den = w.dot(phi_nn * w).real();
  require(den != 0.0, ErrorKind::kDegenerate, "posterior_snr: zero noise power");
  return w.dot(phi_xx * w).real() / den;
}

namespace serial {

SpatialCovariance spatial_covariance(const ComplexSpectrogram& y, const Eigen::MatrixXd& mask, CovKind kind,
                                     DegeneratePolicy policy) {
  check_mask(y, mask);
  const int bins = y.bins(), channels = y.channels(), frames = y.frames();
  SpatialCovariance out;
  out.kind = kind;
  out.phi.assign(bins, ComplexMatrix::Zero(channels, channels));
  out.degenerate.assign(bins, 0);
  for (int f = 0; f < bins; ++f) {
    double sum = 0.0;
    for (int t = 0; t < frames; ++t) sum += mask(t, f);
    if (!(sum > 0.0)) {
      if (policy == DegeneratePolicy::kThrow)
        fail(ErrorKind::kDegenerateMask, "mask sums to zero in bin " + std::to_string(f));
      out.degenerate[f] = 1;
      continue;
    }
    ComplexMatrix acc = ComplexMatrix::Zero(channels, channels);
    for (int t = 0; t < frames; ++t)
      for (int i = 0; i < channels; ++i)
        for (int j = 0; j < channels; ++j) acc(i, j) += mask(t, f) * y(i, t, f) * std::conj(y(j, t, f));
    out.phi[f] = hermitian_part(acc / sum);
  }
  return out;
}

BeamformerWeights gev_vector(const SpatialCovariance& phi_xx, const SpatialCovariance& phi_nn, int k_iters,
                             double loading) {
  check_pair(phi_xx, phi_nn);
  const int bins = phi_xx.bins(), channels = phi_xx.channels();
  BeamformerWeights out;
  out.w.assign(bins, ComplexVector::Zero(channels));
  out.flagged.assign(bins, 0);
  for (int f = 0; f < bins; ++f) {
    if (bin_flagged(phi_xx, f) || bin_flagged(phi_nn, f)) {
      out.flagged[f] = 1;
      continue;
    }
    try {
      out.w[f] = principal_pair(herm_solve(phi_nn.phi[f], phi_xx.phi[f], loading), k_iters).eigvec;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kSingularCovariance) throw;
      out.flagged[f] = 1;
    }
  }
  return out;
}

Eigen::MatrixXcd apply_beamformer(const BeamformerWeights& w, const ComplexSpectrogram& y) {
  require(w.bins() == y.bins(), ErrorKind::kShape, "beamformer bin count mismatch");
  Eigen::MatrixXcd out(y.frames(), y.bins());
  for (int t = 0; t < y.frames(); ++t)
    for (int f = 0; f < y.bins(); ++f) out(t, f) = w.w[f].dot(y.observation(t, f));
  return out;
}

}  // namespace serial

BeamformerWeights mask_beamformer(const ComplexSpectrogram& y, const Eigen::MatrixXd& speech_mask,
                                  const Eigen::MatrixXd& noise_mask, int k_iters, double loading,
                                  BeamformerKind kind) {
  if (kind == BeamformerKind::kMvdr)
    fail(ErrorKind::kNotImplemented, "MVDR initialization of the QR iteration is not implemented");
  const auto phi_xx = spatial_covariance(y, speech_mask, CovKind::kSpeech, DegeneratePolicy::kFlag);
  const auto phi_nn = spatial_covariance(y, noise_mask, CovKind::kNoise, DegeneratePolicy::kFlag);
  return ban_scale(gev_vector(phi_xx, phi_nn, k_iters, loading), phi_nn);
}

}  // namespace gevbf
