#include "gevbf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gevbf/error.hpp"
#include "gevbf/random.hpp"

namespace gevbf {

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kDiffuseWhite: return "diffuse_white";
    case NoiseKind::kCoherentPoint: return "coherent_point";
    case NoiseKind::kBabbleMix: return "babble_mix";
  }
  return "?";
}

const char* to_string(NoiseColor color) { return color == NoiseColor::kPink ? "pink" : "white"; }

NoiseColor parse_noise_color(const std::string& text) {
  if (text == "pink") return NoiseColor::kPink;
  if (text == "white") return NoiseColor::kWhite;
  fail(ErrorKind::kInvalidConfig, "unknown noise color " + text);
}

NoiseKind parse_noise_kind(const std::string& text) {
  for (NoiseKind k : {NoiseKind::kDiffuseWhite, NoiseKind::kCoherentPoint, NoiseKind::kBabbleMix})
    if (text == to_string(k)) return k;
  fail(ErrorKind::kInvalidConfig, "unknown noise kind " + text);
}

SpeakerProfile speaker_preset(const std::string& name) {
  if (name == "A") return {"A", 110.0, 6.0, 1.00};
  if (name == "B") return {"B", 125.0, 8.0, 0.96};
  if (name == "C") return {"C", 200.0, 5.0, 1.08};
  if (name == "D") return {"D", 225.0, 7.0, 1.12};
  if (name == "E") return {"E", 260.0, 10.0, 1.04};
  fail(ErrorKind::kInvalidConfig, "unknown speaker preset " + name);
}

std::vector<std::string> pretraining_speakers() { return {"A", "B", "C", "D"}; }

int SceneConfig::num_samples() const { return static_cast<int>(std::lround(duration_s * stft.sample_rate)); }

void SceneConfig::validate() const {
  stft.validate();
  require(channels >= 2, ErrorKind::kInvalidConfig, "scene needs at least 2 channels");
  require(duration_s >= 0.5, ErrorKind::kInvalidConfig, "scene duration must be >= 0.5 s");
  require(std::isfinite(snr_db), ErrorKind::kInvalidConfig, "snr_db must be finite");
  require(n_classes >= 2, ErrorKind::kInvalidConfig, "n_classes must be >= 2");
  require(reference_channel >= 0 && reference_channel < channels, ErrorKind::kInvalidConfig, "reference channel");
  require(min_segment >= 1 && max_segment >= min_segment, ErrorKind::kInvalidConfig, "segment lengths");
  require(silence_prob >= 0.0 && silence_prob < 1.0, ErrorKind::kInvalidConfig, "silence_prob in [0, 1)");
  require(speaker.f0 > 0.0 && speaker.formant_warp > 0.0, ErrorKind::kInvalidConfig, "speaker profile");
  require(max_delay >= 0.0, ErrorKind::kInvalidConfig, "max_delay must be >= 0");
}

namespace {

struct Formants {
  double freq[3];
  double amp[3];
};

// Class templates are fixed tables shared by every speaker and scene.
Formants class_formants(int cls) {
  Rng rng(derive_seed(0x5EEDF0u, "class-template", static_cast<std::uint64_t>(cls)));
  std::uniform_real_distribution<double> f1(250.0, 900.0), f2(900.0, 2600.0), f3(2400.0, 3800.0), a(0.3, 1.0);
  return {{f1(rng), f2(rng), f3(rng)}, {1.0, a(rng), a(rng)}};
}

double envelope(const Formants& fm, double warp, double hz) {
  static constexpr double kBandwidth[3] = {110.0, 170.0, 250.0};
  double e = 0.02;
  for (int i = 0; i < 3; ++i) {
    const double d = (hz - fm.freq[i] * warp) / (kBandwidth[i] * warp);
    e += fm.amp[i] * std::exp(-0.5 * d * d);
  }
  return e;
}

struct Segment {
  int cls;
  int start;   // sample
  int length;  // samples
};

// Adds a harmonic segment of class `cls` into out[start, start + length).
void render_segment(std::vector<double>& out, const Segment& seg, const SpeakerProfile& spk, double f0,
                    double sample_rate, Rng& rng) {
  const Formants fm = class_formants(seg.cls);
  const int ramp = std::min(80, seg.length / 2);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double nyquist = 0.47 * sample_rate;
  for (int k = 1; k * f0 < nyquist; ++k) {
    const double hz = k * f0;
    const double amp = envelope(fm, spk.formant_warp, hz) * std::pow(10.0, -spk.rolloff_db_per_octave * std::log2(k) / 20.0);
    const double ph = phase(rng);
    const double step = 2.0 * std::numbers::pi * hz / sample_rate;
    for (int i = 0; i < seg.length; ++i) {
      double g = 1.0;
      if (i < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / ramp);
      else if (i >= seg.length - ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * (seg.length - 1 - i) / ramp);
      out[seg.start + i] += g * amp * std::sin(ph + step * i);
    }
  }
}

// Segment plan covering n samples; class 0 is silence.
std::vector<Segment> plan_segments(const SceneConfig& cfg, int n, Rng& rng) {
  std::uniform_int_distribution<int> len(cfg.min_segment, cfg.max_segment);
  std::uniform_int_distribution<int> cls(1, cfg.n_classes - 1);
  std::bernoulli_distribution silent(cfg.silence_prob);
  std::vector<Segment> segs;
  int pos = 0;
  int prev = -1;
  while (pos < n) {
    int c = silent(rng) ? 0 : cls(rng);
    if (c == prev && c != 0) c = 1 + (c % (cfg.n_classes - 1));
    const int length = std::min(len(rng) * cfg.stft.hop, n - pos);
    segs.push_back({c, pos, length});
    prev = c;
    pos += length;
  }
  return segs;
}

std::vector<double> render_talker(const SceneConfig& cfg, const SpeakerProfile& spk, const std::vector<Segment>& segs,
                                  int n, Rng& rng) {
  std::vector<double> s(n, 0.0);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (const auto& seg : segs) {
    if (seg.cls == 0) continue;
    render_segment(s, seg, spk, spk.f0 * (1.0 + jitter(rng)), cfg.stft.sample_rate, rng);
  }
  return s;
}

// Integer far-field delays m * tau rounded, shifted to start at zero.
std::vector<int> steering_delays(int channels, double tau) {
  std::vector<int> d(channels);
  for (int m = 0; m < channels; ++m) d[m] = static_cast<int>(std::lround(m * tau));
  const int lo = *std::min_element(d.begin(), d.end());
  for (int& v : d) v -= lo;
  return d;
}

// Places `src` (length n + pad) on every channel with the given delays.
void place(Eigen::MatrixXd& out, const std::vector<double>& src, const std::vector<int>& delays, int pad) {
  const int n = static_cast<int>(out.cols());
  for (int m = 0; m < out.rows(); ++m)
    for (int i = 0; i < n; ++i) out(m, i) += src[i + pad - delays[m]];
}

std::vector<double> white(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Kellet's pink filter over white noise, after a warm-up so the slow
// sections have settled.
std::vector<double> pink(int n, Rng& rng) {
  const int warm = 4096;
  const auto w = white(n + warm, rng);
  std::vector<double> v(n);
  double b[7] = {0, 0, 0, 0, 0, 0, 0};
  for (int i = 0; i < n + warm; ++i) {
    const double x = w[i];
    b[0] = 0.99886 * b[0] + x * 0.0555179;
    b[1] = 0.99332 * b[1] + x * 0.0750759;
    b[2] = 0.96900 * b[2] + x * 0.1538520;
    b[3] = 0.86650 * b[3] + x * 0.3104856;
    b[4] = 0.55000 * b[4] + x * 0.5329522;
    b[5] = -0.7616 * b[5] - x * 0.0168980;
    const double y = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + x * 0.5362;
    b[6] = x * 0.115926;
    if (i >= warm) v[i - warm] = y;
  }
  return v;
}

double energy(const Eigen::MatrixXd& w) { return w.squaredNorm(); }

}  // namespace

Scene make_scene(const SceneConfig& cfg) {
  cfg.validate();
  const int n = cfg.num_samples();
  const int m_count = cfg.channels;
  const int pad = static_cast<int>(std::ceil(cfg.max_delay * (m_count - 1))) + 1;
  Rng rng(derive_seed(cfg.seed, "scene"));
  std::uniform_real_distribution<double> dir(-cfg.max_delay, cfg.max_delay);

  Scene sc;
  sc.meta = cfg;
  const auto segs = plan_segments(cfg, n + pad, rng);
  const auto speech = render_talker(cfg, cfg.speaker, segs, n + pad, rng);
  const double tau_s = dir(rng);
  sc.speech_delays = steering_delays(m_count, tau_s);
  sc.x_wave = Eigen::MatrixXd::Zero(m_count, n);
  place(sc.x_wave, speech, sc.speech_delays, pad);
  const double x_energy = energy(sc.x_wave);
  require(x_energy > 0.0, ErrorKind::kDegenerate, "scene rendered no speech energy");
  sc.x_wave *= cfg.speech_rms * std::sqrt(m_count * static_cast<double>(n) / x_energy);

  // a noise direction kept apart from the speech direction
  auto other_direction = [&] {
    double tau = dir(rng);
    for (int tries = 0; tries < 64 && std::abs(tau - tau_s) < 0.4 * cfg.max_delay; ++tries) tau = dir(rng);
    return tau;
  };
  sc.n_wave = Eigen::MatrixXd::Zero(m_count, n);
  switch (cfg.noise) {
    case NoiseKind::kDiffuseWhite: {
      for (int m = 0; m < m_count; ++m) {
        const auto v = white(n, rng);
        sc.n_wave.row(m) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), n);
      }
      break;
    }
    case NoiseKind::kCoherentPoint:
    case NoiseKind::kBabbleMix: {
      const int sources = cfg.noise == NoiseKind::kCoherentPoint ? 1 : 4;
      for (int s = 0; s < sources; ++s) {
        std::vector<double> src;
        if (cfg.noise == NoiseKind::kCoherentPoint) {
          src = cfg.point_noise == NoiseColor::kPink ? pink(n + pad, rng) : white(n + pad, rng);
        } else {
          std::uniform_real_distribution<double> f0(95.0, 260.0), warp(0.9, 1.2), tilt(4.0, 10.0);
          SpeakerProfile talker{"babble", f0(rng), tilt(rng), warp(rng)};
          SceneConfig bcfg = cfg;
          bcfg.silence_prob = 0.05;
          src = render_talker(bcfg, talker, plan_segments(bcfg, n + pad, rng), n + pad, rng);
        }
        place(sc.n_wave, src, steering_delays(m_count, other_direction()), pad);
      }
      const double point = energy(sc.n_wave);
      const double sensor_scale = std::sqrt(point / (m_count * static_cast<double>(n)) *
                                            std::pow(10.0, cfg.sensor_noise_db / 10.0));
      for (int m = 0; m < m_count; ++m) {
        const auto v = white(n, rng);
        sc.n_wave.row(m) += sensor_scale * Eigen::Map<const Eigen::RowVectorXd>(v.data(), n);
      }
      break;
    }
  }
  const double target = energy(sc.x_wave) / std::pow(10.0, cfg.snr_db / 10.0);
  sc.n_wave *= std::sqrt(target / energy(sc.n_wave));

  sc.x = stft(sc.x_wave, cfg.stft);
  sc.n = stft(sc.n_wave, cfg.stft);
  sc.y = ComplexSpectrogram(m_count, sc.x.frames(), sc.x.bins(), cfg.stft);
  for (std::size_t i = 0; i < sc.y.data().size(); ++i) sc.y.data()[i] = sc.x.data()[i] + sc.n.data()[i];
  sc.ideal = ideal_masks(sc.x, sc.n, cfg.reference_channel);

  // label of each frame = class active at the frame's centre sample (speech
  // sample i sits at index i + pad - delay in the source; use the reference)
  const int ref_delay = sc.speech_delays[cfg.reference_channel];
  sc.classes.resize(sc.x.frames());
  for (int t = 0; t < sc.x.frames(); ++t) {
    const int centre = t * cfg.stft.hop + cfg.stft.win_len / 2 + pad - ref_delay;
    int cls = 0;
    for (const auto& seg : segs)
      if (centre >= seg.start && centre < seg.start + seg.length) cls = seg.cls;
    sc.classes[t] = cls;
  }
  return sc;
}

MaskPair ideal_masks(const ComplexSpectrogram& x, const ComplexSpectrogram& n, int channel) {
  require(x.same_shape(n), ErrorKind::kShape, "ideal_masks: speech and noise shapes differ");
  require(channel >= 0 && channel < x.channels(), ErrorKind::kShape, "ideal_masks: channel out of range");
  MaskPair out;
  out.speech.resize(x.frames(), x.bins());
  for (int t = 0; t < x.frames(); ++t)
    for (int f = 0; f < x.bins(); ++f) {
      const double px = std::norm(x(channel, t, f)), pn = std::norm(n(channel, t, f));
      out.speech(t, f) = px + pn > 0.0 ? px / (px + pn) : 0.5;
    }
  out.noise = (1.0 - out.speech.array()).matrix();
  return out;
}

std::vector<MaskTrainingExample> mask_examples(const Scene& scene) {
  std::vector<MaskTrainingExample> out;
  for (int m = 0; m < scene.y.channels(); ++m) {
    const MaskPair ideal = ideal_masks(scene.x, scene.n, m);
    out.push_back({scene.y.channel(m).cwiseAbs(), ideal.speech, ideal.noise});
  }
  return out;
}

double mixture_snr_db(const Scene& scene) {
  return 10.0 * std::log10(energy(scene.x_wave) / energy(scene.n_wave));
}

double channel_snr_db(const Scene& scene, int channel) {
  const double px = scene.x.channel(channel).cwiseAbs2().sum();
  const double pn = scene.n.channel(channel).cwiseAbs2().sum();
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(px / pn);
}

SnrReport snr_gain(const BeamformerWeights& w, const Scene& scene) {
  const Eigen::MatrixXcd sx = apply_beamformer(w, scene.x);
  const Eigen::MatrixXcd sn = apply_beamformer(w, scene.n);
  SnrReport r;
  const double px = sx.cwiseAbs2().sum(), pn = sn.cwiseAbs2().sum();
  r.output_db = pn > 0.0 ? 10.0 * std::log10(px / pn) : std::numeric_limits<double>::infinity();
  r.best_input_db = -std::numeric_limits<double>::infinity();
  for (int m = 0; m < scene.y.channels(); ++m) r.best_input_db = std::max(r.best_input_db, channel_snr_db(scene, m));
  r.gain_db = r.output_db - r.best_input_db;
  return r;
}

}  // namespace gevbf
