#include "gevbf/signal.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "gevbf/error.hpp"

namespace gevbf {

void StftConfig::validate() const {
  require(sample_rate > 0, ErrorKind::kInvalidConfig, "sample_rate must be positive");
  require(win_len >= 2, ErrorKind::kInvalidConfig, "win_len must be >= 2");
  require(hop >= 1 && hop <= win_len, ErrorKind::kInvalidConfig, "hop must be in [1, win_len]");
  require(win_len <= dft_size, ErrorKind::kInvalidConfig, "win_len must not exceed dft_size");
}

int frame_count(int n_samples, const StftConfig& cfg) {
  if (n_samples < cfg.win_len) return 0;
  return 1 + (n_samples - cfg.win_len) / cfg.hop;
}

ComplexSpectrogram::ComplexSpectrogram(int channels, int frames, int bins, StftConfig config)
    : channels_(channels), frames_(frames), bins_(bins), config_(config),
      data_(static_cast<std::size_t>(channels) * frames * bins) {
  require(channels >= 0 && frames >= 0 && bins >= 0, ErrorKind::kShape, "negative spectrogram dims");
}

Eigen::VectorXcd ComplexSpectrogram::observation(int t, int f) const {
  Eigen::VectorXcd y(channels_);
  for (int m = 0; m < channels_; ++m) y(m) = (*this)(m, t, f);
  return y;
}

Eigen::MatrixXcd ComplexSpectrogram::channel(int m) const {
  Eigen::MatrixXcd out(frames_, bins_);
  for (int t = 0; t < frames_; ++t)
    for (int f = 0; f < bins_; ++f) out(t, f) = (*this)(m, t, f);
  return out;
}

ComplexSpectrogram ComplexSpectrogram::from_channel(const Eigen::MatrixXcd& tf, StftConfig config) {
  ComplexSpectrogram out(1, static_cast<int>(tf.rows()), static_cast<int>(tf.cols()), config);
  for (int t = 0; t < out.frames(); ++t)
    for (int f = 0; f < out.bins(); ++f) out(0, t, f) = tf(t, f);
  return out;
}

namespace {

// FFTW plans are created once per size under a lock; execution with the
// new-array interface is thread safe.
struct DftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const DftPlans& plans_for(int n) {
  static std::mutex mu;
  static std::map<int, DftPlans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> re(n);
  std::vector<fftw_complex> spec(n / 2 + 1);
  DftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(n, re.data(), spec.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(n, spec.data(), re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  return cache.emplace(n, p).first->second;
}

}  // namespace

std::vector<double> build_window(const StftConfig& cfg) {
  require(cfg.win_len >= 2, ErrorKind::kInvalidConfig, "win_len must be >= 2");
  const int n = cfg.win_len;
  std::vector<double> w(n);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    const double x = kTwoPi * i / n;
    w[i] = 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
  }
  return w;
}

ComplexSpectrogram stft(const Eigen::MatrixXd& wave, const StftConfig& cfg) {
  cfg.validate();
  const int channels = static_cast<int>(wave.rows());
  const int n_samples = static_cast<int>(wave.cols());
  require(channels >= 1, ErrorKind::kShape, "stft needs at least one channel");
  if (n_samples < cfg.win_len)
    fail(ErrorKind::kSignalTooShort, std::to_string(n_samples) + " samples < win_len " +
                                         std::to_string(cfg.win_len));
  require(wave.allFinite(), ErrorKind::kInvalidInput, "non-finite samples");

  const int frames = frame_count(n_samples, cfg);
  const int bins = cfg.num_bins();
  const auto window = build_window(cfg);
  const auto& plan = plans_for(cfg.dft_size);
  ComplexSpectrogram out(channels, frames, bins, cfg);

#pragma omp parallel
  {
    std::vector<double> buf(cfg.dft_size);
    std::vector<fftw_complex> spec(bins);
#pragma omp for collapse(2) schedule(static)
    for (int m = 0; m < channels; ++m) {
      for (int t = 0; t < frames; ++t) {
        std::fill(buf.begin(), buf.end(), 0.0);
        const int start = t * cfg.hop;
        for (int i = 0; i < cfg.win_len; ++i) buf[i] = wave(m, start + i) * window[i];
        fftw_execute_dft_r2c(plan.forward, buf.data(), spec.data());
        for (int f = 0; f < bins; ++f) out(m, t, f) = cdouble(spec[f][0], spec[f][1]);
      }
    }
  }
  return out;
}

std::vector<double> inverse_frame(std::span<const cdouble> bins, const StftConfig& cfg) {
  require(static_cast<int>(bins.size()) == cfg.num_bins(), ErrorKind::kShape, "frame bin count mismatch");
  const auto& plan = plans_for(cfg.dft_size);
  std::vector<fftw_complex> spec(bins.size());
  for (std::size_t f = 0; f < bins.size(); ++f) {
    spec[f][0] = bins[f].real();
    spec[f][1] = bins[f].imag();
  }
  std::vector<double> out(cfg.dft_size);
  fftw_execute_dft_c2r(plan.inverse, spec.data(), out.data());
  const double scale = 1.0 / cfg.dft_size;
  for (double& v : out) v *= scale;
  return out;
}

Eigen::VectorXd istft(const ComplexSpectrogram& spec, const StftConfig& cfg) {
  cfg.validate();
  require(spec.channels() == 1, ErrorKind::kShape, "istft expects a single-channel spectrogram");
  require(spec.bins() == cfg.num_bins(), ErrorKind::kShape, "istft bin count mismatch");
  const int frames = spec.frames();
  if (frames == 0) return Eigen::VectorXd();
  const int length = (frames - 1) * cfg.hop + cfg.win_len;
  const auto window = build_window(cfg);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(length);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(length);
  const auto data = spec.data();
  for (int t = 0; t < frames; ++t) {
    const auto frame = inverse_frame(data.subspan(static_cast<std::size_t>(t) * spec.bins(), spec.bins()), cfg);
    const int start = t * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) {
      out(start + i) += window[i] * frame[i];
      norm(start + i) += window[i] * window[i];
    }
  }
  for (int n = 0; n < length; ++n) out(n) = norm(n) > 1e-12 ? out(n) / norm(n) : 0.0;
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelBank MelBank::build(const StftConfig& cfg, int n_mels, double floor_eps) {
  cfg.validate();
  require(n_mels >= 1, ErrorKind::kInvalidConfig, "n_mels must be >= 1");
  require(floor_eps > 0.0, ErrorKind::kInvalidConfig, "floor_eps must be positive");
  const int bins = cfg.num_bins();
  const double nyquist = cfg.sample_rate / 2.0;
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.dft_size;
  const double mel_max = hz_to_mel(nyquist);

  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));

  MelBank bank;
  bank.floor_eps = floor_eps;
  bank.weights = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int i = 0; i < n_mels; ++i) {
    const double lo = edges[i], mid = edges[i + 1], hi = edges[i + 2];
    for (int f = 0; f < bins; ++f) {
      const double hz = f * bin_hz;
      const double up = (hz - lo) / (mid - lo);
      const double down = (hi - hz) / (hi - mid);
      const double w = std::min(up, down);
      // Edge bins land on a filter boundary up to rounding; keep them exactly zero.
      bank.weights(i, f) = w > 1e-12 ? w : 0.0;
    }
    // Filters narrower than the bin spacing fall back to their nearest bin.
    if (bank.weights.row(i).maxCoeff() <= 0.0) {
      const int nearest = std::clamp(static_cast<int>(std::lround(mid / bin_hz)), 0, bins - 1);
      bank.weights(i, nearest) = 1.0;
    }
  }
  return bank;
}

namespace {

void check_power(std::span<const double> power_frame, const MelBank& bank) {
  require(static_cast<int>(power_frame.size()) == bank.num_bins(), ErrorKind::kShape,
          "power frame length does not match mel bank");
  for (double p : power_frame)
    require(std::isfinite(p) && p >= 0.0, ErrorKind::kInvalidInput, "power entries must be finite and >= 0");
}

}  // namespace

Eigen::VectorXd log_mel(std::span<const double> power_frame, const MelBank& bank) {
  check_power(power_frame, bank);
  const Eigen::Map<const Eigen::VectorXd> p(power_frame.data(), static_cast<Eigen::Index>(power_frame.size()));
  const Eigen::VectorXd energy = bank.weights * p;
  return energy.unaryExpr([&](double e) { return std::log(std::max(e, bank.floor_eps)); });
}

Eigen::VectorXd log_mel_vjp(std::span<const double> power_frame, const MelBank& bank,
                            const Eigen::VectorXd& out_grad) {
  check_power(power_frame, bank);
  require(out_grad.size() == bank.num_mels(), ErrorKind::kShape, "log_mel cotangent length mismatch");
  const Eigen::Map<const Eigen::VectorXd> p(power_frame.data(), static_cast<Eigen::Index>(power_frame.size()));
  const Eigen::VectorXd energy = bank.weights * p;
  Eigen::VectorXd d_energy(energy.size());
  for (Eigen::Index i = 0; i < energy.size(); ++i)
    d_energy(i) = energy(i) > bank.floor_eps ? out_grad(i) / energy(i) : 0.0;
  return bank.weights.transpose() * d_energy;
}

Eigen::MatrixXd log_mel_frames(const Eigen::MatrixXd& power, const MelBank& bank) {
  Eigen::MatrixXd out(power.rows(), bank.num_mels());
  for (Eigen::Index t = 0; t < power.rows(); ++t) {
    const Eigen::VectorXd row = power.row(t).transpose();
    out.row(t) = log_mel(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), bank).transpose();
  }
  return out;
}

Eigen::MatrixXd log_mel_frames_vjp(const Eigen::MatrixXd& power, const MelBank& bank,
                                   const Eigen::MatrixXd& out_grad) {
  require(out_grad.rows() == power.rows(), ErrorKind::kShape, "log_mel cotangent frame mismatch");
  Eigen::MatrixXd out(power.rows(), power.cols());
  for (Eigen::Index t = 0; t < power.rows(); ++t) {
    const Eigen::VectorXd row = power.row(t).transpose();
    out.row(t) = log_mel_vjp(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), bank, out_grad.row(t).transpose()).transpose();
  }
  return out;
}

}  // namespace gevbf
