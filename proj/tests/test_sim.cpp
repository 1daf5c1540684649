#include <cmath>
#include <limits>

#include "doctest.h"
#include "gevbf/error.hpp"
#include "gevbf/sim.hpp"
#include "oracles.hpp"

using namespace gevbf;

namespace {

SceneConfig base(std::uint64_t seed, NoiseKind kind = NoiseKind::kCoherentPoint, double snr = 0.0) {
  SceneConfig c;
  c.seed = seed;
  c.noise = kind;
  c.snr_db = snr;
  return c;
}

bool same(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("scenes are deterministic and additive") {
  for (NoiseKind k : {NoiseKind::kDiffuseWhite, NoiseKind::kCoherentPoint, NoiseKind::kBabbleMix}) {
    const Scene a = make_scene(base(3, k)), b = make_scene(base(3, k));
    CHECK(same(a.y, b.y));
    CHECK(a.classes == b.classes);
    CHECK(!same(a.y, make_scene(base(4, k)).y));
    for (std::size_t i = 0; i < a.y.data().size(); ++i) CHECK_EQ(a.y.data()[i] - (a.x.data()[i] + a.n.data()[i]), cdouble(0.0));
    CHECK(a.y.channels() == 6);
    CHECK(a.y.bins() == 201);
    CHECK(static_cast<int>(a.classes.size()) == a.y.frames());
  }
}

TEST_CASE("mixture snr matches the configuration") {
  for (NoiseKind k : {NoiseKind::kDiffuseWhite, NoiseKind::kCoherentPoint, NoiseKind::kBabbleMix})
    for (double snr : {-5.0, 0.0, 7.5, 20.0}) {
      const Scene s = make_scene(base(1, k, snr));
      CHECK(std::abs(mixture_snr_db(s) - snr) < 0.1);
    }
}

TEST_CASE("high snr gives speech masks near one on speech cells") {
  const Scene s = make_scene(base(2, NoiseKind::kDiffuseWhite, 60.0));
  const Eigen::MatrixXd px = s.x.channel(0).cwiseAbs2();
  const double floor = 1e-2 * px.mean();
  int cells = 0;
  for (Eigen::Index i = 0; i < px.size(); ++i)
    if (px.data()[i] > floor) {
      ++cells;
      CHECK(s.ideal.speech.data()[i] > 0.99);
    }
  CHECK(cells > 100);
}

TEST_CASE("ideal mask cases") {
  oracle::Rng rng(1);
  ComplexSpectrogram x(2, 3, 4), n(2, 3, 4);
  const auto r = oracle::random_complex(rng, 6, 4);
  for (int m = 0; m < 2; ++m)
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 4; ++f) x(m, t, f) = r(m * 3 + t, f);
  x(0, 1, 2) = 0.0;
  MaskPair p = ideal_masks(x, n);
  CHECK(p.speech(0, 0) == 1.0);
  CHECK(p.speech(1, 2) == 0.5);  // 0/0
  CHECK(p.noise(0, 0) == 0.0);
  n(0, 2, 1) = x(0, 2, 1) * cdouble(0.0, 1.0);
  p = ideal_masks(x, n);
  CHECK(p.speech(2, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.speech(2, 1) + p.noise(2, 1) == 1.0);
  CHECK_THROWS_AS(ideal_masks(x, ComplexSpectrogram(2, 3, 5)), Error);

  const Scene s = make_scene(base(5));
  CHECK((s.ideal.speech.array() >= 0.0).all());
  CHECK((s.ideal.speech.array() <= 1.0).all());
  CHECK(mask_examples(s).size() == 6);
}

TEST_CASE("frame classes follow the rendered segments") {
  const Scene s = make_scene(base(6, NoiseKind::kDiffuseWhite, 60.0));
  const Eigen::MatrixXd px = s.x.channel(0).cwiseAbs2();
  double sil = 0.0, act = 0.0;
  int n_sil = 0, n_act = 0;
  for (int t = 0; t < s.y.frames(); ++t) {
    CHECK(s.classes[t] >= 0);
    CHECK(s.classes[t] < 8);
    if (s.classes[t] == 0) sil += px.row(t).sum(), ++n_sil;
    else act += px.row(t).sum(), ++n_act;
  }
  REQUIRE(n_sil > 0);
  REQUIRE(n_act > 0);
  CHECK(sil / n_sil < 0.1 * act / n_act);
}

TEST_CASE("snr gain of selectors, scaling and zero noise") {
  const Scene s = make_scene(base(7, NoiseKind::kDiffuseWhite, 3.0));
  double best = -1e300;
  for (int m = 0; m < 6; ++m) best = std::max(best, channel_snr_db(s, m));
  for (int m = 0; m < 6; ++m) {
    BeamformerWeights sel;
    sel.w.assign(201, ComplexVector::Unit(6, m));
    const SnrReport r = snr_gain(sel, s);
    CHECK(r.gain_db <= 0.0);
    CHECK(r.gain_db == doctest::Approx(channel_snr_db(s, m) - best).epsilon(1e-12));
  }
  const auto w = mask_beamformer(s.y, s.ideal.speech, s.ideal.noise, 5, 1e-6);
  BeamformerWeights scaled = w;
  for (auto& v : scaled.w) v *= 3.5;
  CHECK(snr_gain(scaled, s).gain_db == doctest::Approx(snr_gain(w, s).gain_db).epsilon(1e-12));

  Scene quiet = s;
  for (auto& c : quiet.n.data()) c = 0.0;
  CHECK(snr_gain(w, quiet).output_db == std::numeric_limits<double>::infinity());
}

TEST_CASE("ideal-mask beamformer beats every channel under diffuse noise") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = make_scene(base(seed, NoiseKind::kDiffuseWhite));
    const auto w = mask_beamformer(s.y, s.ideal.speech, s.ideal.noise, 5, 1e-6);
    const SnrReport r = snr_gain(w, s);
    for (int m = 0; m < 6; ++m) CHECK(r.output_db > channel_snr_db(s, m));
  }
}

TEST_CASE("scene config validation") {
  SceneConfig c;
  c.channels = 1;
  CHECK_THROWS_AS(make_scene(c), Error);
  c = SceneConfig{};
  c.duration_s = 0.4;
  CHECK_THROWS_AS(make_scene(c), Error);
  c = SceneConfig{};
  c.snr_db = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(make_scene(c), Error);
  CHECK_THROWS_AS(speaker_preset("Z"), Error);
  CHECK(parse_noise_kind("babble_mix") == NoiseKind::kBabbleMix);
  CHECK_THROWS_AS(parse_noise_kind("pink"), Error);
}
