#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gevbf {

using cdouble = std::complex<double>;

enum class WindowKind { kBlackman };

struct StftConfig {
  int sample_rate = 16000;
  int win_len = 400;   // 25 ms
  int hop = 160;       // 10 ms
  int dft_size = 400;  // F = 201
  WindowKind window = WindowKind::kBlackman;

  int num_bins() const { return dft_size / 2 + 1; }
  // Throws invalid-config when the framing is inconsistent.
  void validate() const;
};

// Number of frames produced for a signal of `n_samples`.
int frame_count(int n_samples, const StftConfig& cfg);

// Complex STFT tensor indexed [channel, frame, bin].
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(int channels, int frames, int bins, StftConfig config = {});

  int channels() const { return channels_; }
  int frames() const { return frames_; }
  int bins() const { return bins_; }
  const StftConfig& config() const { return config_; }

  cdouble& operator()(int m, int t, int f) { return data_[index(m, t, f)]; }
  const cdouble& operator()(int m, int t, int f) const { return data_[index(m, t, f)]; }

  std::span<cdouble> data() { return data_; }
  std::span<const cdouble> data() const { return data_; }

  // Stacked observation vector Y_{t,f} across channels.
  Eigen::VectorXcd observation(int t, int f) const;
  // Single channel as a [T, F] complex matrix.
  Eigen::MatrixXcd channel(int m) const;
  static ComplexSpectrogram from_channel(const Eigen::MatrixXcd& tf, StftConfig config = {});

  bool same_shape(const ComplexSpectrogram& other) const {
    return channels_ == other.channels_ && frames_ == other.frames_ && bins_ == other.bins_;
  }

 private:
  std::size_t index(int m, int t, int f) const {
    return (static_cast<std::size_t>(m) * frames_ + t) * bins_ + f;
  }

  int channels_ = 0;
  int frames_ = 0;
  int bins_ = 0;
  StftConfig config_;
  std::vector<cdouble> data_;
};

// Periodic Blackman window (a0 = 0.42, a1 = 0.5, a2 = 0.08).
std::vector<double> build_window(const StftConfig& cfg);

// wave: [M, n_samples].
ComplexSpectrogram stft(const Eigen::MatrixXd& wave, const StftConfig& cfg);

// Weighted overlap-add inverse of a single-channel spectrogram. Samples where
// the summed squared window vanishes (the outermost edge) are set to zero.
Eigen::VectorXd istft(const ComplexSpectrogram& spec, const StftConfig& cfg);

// Inverse real DFT of one frame of F bins, returning dft_size samples.
std::vector<double> inverse_frame(std::span<const cdouble> bins, const StftConfig& cfg);

struct MelBank {
  Eigen::MatrixXd weights;  // [n_mels, F]
  double floor_eps = 1e-10;

  int num_mels() const { return static_cast<int>(weights.rows()); }
  int num_bins() const { return static_cast<int>(weights.cols()); }

  // HTK-scale triangular filters from 0 Hz to Nyquist.
  static MelBank build(const StftConfig& cfg, int n_mels = 80, double floor_eps = 1e-10);
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// out[i] = ln(max(sum_f W[i,f] p[f], floor_eps)).
Eigen::VectorXd log_mel(std::span<const double> power_frame, const MelBank& bank);
Eigen::VectorXd log_mel_vjp(std::span<const double> power_frame, const MelBank& bank,
                            const Eigen::VectorXd& out_grad);

// Row-wise versions over a [T, F] power matrix.
Eigen::MatrixXd log_mel_frames(const Eigen::MatrixXd& power, const MelBank& bank);
Eigen::MatrixXd log_mel_frames_vjp(const Eigen::MatrixXd& power, const MelBank& bank,
                                   const Eigen::MatrixXd& out_grad);

}  // namespace gevbf
