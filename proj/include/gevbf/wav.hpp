#pragma once

#include <filesystem>

#include <Eigen/Dense>

namespace gevbf {

enum class WavFormat { kPcm16, kFloat32 };

struct WavData {
  int sample_rate = 16000;
  Eigen::MatrixXd samples;  // [channels, n_samples], nominal range [-1, 1]
};

// Reads PCM16 or IEEE float32 RIFF/WAVE (plain or extensible fmt chunk).
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavData& wav, WavFormat format);

// Rejects files whose rate differs from `expected_rate`; no resampler exists.
void require_sample_rate(const WavData& wav, int expected_rate);

}  // namespace gevbf
