#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gevbf/am.hpp"
#include "gevbf/beamform.hpp"
#include "gevbf/maskestim.hpp"
#include "gevbf/signal.hpp"

namespace gevbf {

enum class NoiseKind { kDiffuseWhite, kCoherentPoint, kBabbleMix };

const char* to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

// Spectrum of the coherent point source.
enum class NoiseColor { kWhite, kPink };
const char* to_string(NoiseColor color);
NoiseColor parse_noise_color(const std::string& text);

// A synthetic talker: harmonic stack at f0 with a spectral tilt, shaped by
// class-specific formant envelopes scaled by `formant_warp`.
struct SpeakerProfile {
  std::string name = "A";
  double f0 = 110.0;
  double rolloff_db_per_octave = 6.0;
  double formant_warp = 1.0;
};

// Presets "A".."D" (pretraining pool) and "E" (held out).
SpeakerProfile speaker_preset(const std::string& name);
std::vector<std::string> pretraining_speakers();

struct SceneConfig {
  int channels = 6;
  double duration_s = 1.0;
  double snr_db = 0.0;
  SpeakerProfile speaker;
  NoiseKind noise = NoiseKind::kCoherentPoint;
  NoiseColor point_noise = NoiseColor::kPink;
  int n_classes = 8;
  std::uint64_t seed = 0;
  StftConfig stft;
  int reference_channel = 0;
  double max_delay = 1.5;        // samples per microphone step, far field
  double sensor_noise_db = -25;  // relative to the point/babble noise power
  int min_segment = 15;          // frames
  int max_segment = 30;
  double silence_prob = 0.2;
  double speech_rms = 0.05;

  int num_samples() const;
  void validate() const;
};

struct Scene {
  ComplexSpectrogram y, x, n;
  MaskPair ideal;  // reference channel
  StateSequence classes;
  SceneConfig meta;
  Eigen::MatrixXd x_wave, n_wave;  // [M, samples]
  std::vector<int> speech_delays;
};

Scene make_scene(const SceneConfig& cfg);

// |X|^2 / (|X|^2 + |N|^2) on one channel, 0/0 -> 0.5; noise mask = 1 - speech.
MaskPair ideal_masks(const ComplexSpectrogram& x, const ComplexSpectrogram& n, int channel = 0);

// One supervised example per channel with that channel's ideal masks.
std::vector<MaskTrainingExample> mask_examples(const Scene& scene);

// Energy ratio over all channels in the time domain.
double mixture_snr_db(const Scene& scene);
double channel_snr_db(const Scene& scene, int channel);

struct SnrReport {
  double output_db = 0.0;
  double best_input_db = 0.0;
  double gain_db = 0.0;
};

// Output SNR of w^H X against w^H N minus the best single-channel SNR. A zero
// noise output yields +inf.
SnrReport snr_gain(const BeamformerWeights& w, const Scene& scene);

}  // namespace gevbf
