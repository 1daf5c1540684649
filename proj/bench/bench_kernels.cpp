#include <benchmark/benchmark.h>

#include <random>

#include "gevbf/beamform.hpp"
#include "gevbf/signal.hpp"

using namespace gevbf;

namespace {

// M channels, T frames, 201 bins of complex Gaussian noise plus a rank-1 source.
struct Fixture {
  ComplexSpectrogram y;
  Eigen::MatrixXd speech, noise;
  SpatialCovariance phi_xx, phi_nn;
  BeamformerWeights w;

  Fixture(int m, int t) : y(m, t, 201) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u;
    for (auto& v : y.data()) v = {g(rng), g(rng)};
    speech = Eigen::MatrixXd::NullaryExpr(t, 201, [&] { return u(rng); });
    noise = (1.0 - speech.array()).matrix();
    phi_xx = spatial_covariance(y, speech, CovKind::kSpeech);
    phi_nn = spatial_covariance(y, noise, CovKind::kNoise);
    w = gev_vector(phi_xx, phi_nn);
  }
};

const Fixture& fixture(int m) {
  static const Fixture f2(2, 300), f6(6, 300);
  return m == 2 ? f2 : f6;
}

void BM_Covariance(benchmark::State& state, bool parallel) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? spatial_covariance(f.y, f.speech, CovKind::kSpeech)
                                      : serial::spatial_covariance(f.y, f.speech, CovKind::kSpeech));
}

void BM_Gev(benchmark::State& state, bool parallel) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? gev_vector(f.phi_xx, f.phi_nn) : serial::gev_vector(f.phi_xx, f.phi_nn));
}

void BM_Apply(benchmark::State& state, bool parallel) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? apply_beamformer(f.w, f.y) : serial::apply_beamformer(f.w, f.y));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Covariance, serial, false)->Arg(2)->Arg(6);
BENCHMARK_CAPTURE(BM_Covariance, omp, true)->Arg(2)->Arg(6);
BENCHMARK_CAPTURE(BM_Gev, serial, false)->Arg(2)->Arg(6);
BENCHMARK_CAPTURE(BM_Gev, omp, true)->Arg(2)->Arg(6);
BENCHMARK_CAPTURE(BM_Apply, serial, false)->Arg(2)->Arg(6);
BENCHMARK_CAPTURE(BM_Apply, omp, true)->Arg(2)->Arg(6);

BENCHMARK_MAIN();
