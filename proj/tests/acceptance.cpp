// Runs every primary acceptance criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "gevbf/adapt.hpp"
#include "gevbf/beamform.hpp"
#include "gevbf/gradcheck.hpp"
#include "gevbf/linalg.hpp"
#include "gevbf/maskestim.hpp"
#include "gevbf/random.hpp"
#include "gevbf/signal.hpp"
#include "oracles.hpp"

using namespace gevbf;
using clk = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

void verdict(const char* name, bool pass, const std::string& detail) {
  std::printf("%s %-28s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

void note(const std::string& text) {
  std::printf("     %s\n", text.c_str());
  std::fflush(stdout);
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SpatialCovariance one_bin(const Eigen::MatrixXcd& phi, CovKind kind) {
  SpatialCovariance s;
  s.phi = {phi};
  s.kind = kind;
  s.degenerate = {0};
  return s;
}

void gradient_correctness() {
  const auto t0 = clk::now();
  double worst = 0.0;
  std::string worst_op;
  for (const std::string& op : gradcheck_ops()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const GradCheckReport r = finite_diff_check(op, seed);
      const double e = std::isnan(r.max_rel_err) ? std::numeric_limits<double>::infinity() : r.max_rel_err;
      if (e >= worst) worst = e, worst_op = op;
    }
  }
  const double t = seconds_since(t0);
  verdict("gradient_correctness", worst < 1e-4 && t < 60.0,
          fmt("%zu ops x 20 seeds, worst %.2e (%s) < 1e-4, %.1f s < 60 s", gradcheck_ops().size(), worst,
              worst_op.c_str(), t));
}

void eigensolver_oracle() {
  oracle::Rng rng(100);
  double worst_val = 0.0, worst_cos = 1.0, worst_k5 = 1.0;
  int gapped = 0, k5_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const int n = i < 50 ? 2 : 3;
    const auto pair = oracle::random_pair(rng, n);
    const ComplexMatrix phi = pair.nn.lu().solve(pair.xx);
    const auto roots = oracle::charpoly_roots(phi);
    const oracle::EigPair ref = oracle::principal_eig(phi);
    const PrincipalPair k50 = principal_pair(phi, 50);
    worst_val = std::max(worst_val, std::abs(k50.eigval - ref.value) / std::abs(ref.value));
    worst_cos = std::min(worst_cos, oracle::cosine(k50.eigvec, ref.vector));
    if (roots[0] / roots[1] >= 10.0) {
      ++gapped;
      const double c = oracle::cosine(principal_pair(phi, 5).eigvec, ref.vector);
      worst_k5 = std::min(worst_k5, c);
      k5_ok += c >= 0.999;
    }
  }
  verdict("eigensolver_oracle", worst_val < 1e-6 && 1.0 - worst_cos <= 1e-8 && gapped > 0 && k5_ok == gapped,
          fmt("100 pairs (n=2,3), K=50: eigval rel %.1e < 1e-6, 1-cos %.1e <= 1e-8; K=5: %d/%d gap>=10 pairs "
              "cos>=0.999 (min %.6f)",
              worst_val, 1.0 - worst_cos, k5_ok, gapped, worst_k5));
}

void gev_optimality() {
  oracle::Rng rng(200);
  int violations = 0, instances = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int m : {2, 4, 6}) {
    for (int i = 0; i < 50; ++i, ++instances) {
      const auto pair = oracle::random_pair(rng, m);
      const BeamformerWeights w = gev_vector(one_bin(pair.xx, CovKind::kSpeech), one_bin(pair.nn, CovKind::kNoise));
      const double snr = posterior_snr(w.w[0], pair.xx, pair.nn);
      for (int j = 0; j < 1000; ++j) {
        const double other = posterior_snr(oracle::random_unit(rng, m), pair.xx, pair.nn);
        worst_margin = std::min(worst_margin, (snr - other) / snr);
        violations += other > snr;
      }
    }
  }
  verdict("gev_optimality", violations == 0,
          fmt("%d instances (M=2,4,6) x 1000 random unit vectors, %d exceed the GEV posterior SNR, min relative margin %.2e",
              instances, violations, worst_margin));
}

void ban_invariance() {
  oracle::Rng rng(300);
  double worst_snr = 0.0, worst_identity = 0.0;
  for (int m : {2, 3, 4, 5, 6}) {
    for (int i = 0; i < 20; ++i) {
      const auto pair = oracle::random_pair(rng, m);
      const auto xx = one_bin(pair.xx, CovKind::kSpeech), nn = one_bin(pair.nn, CovKind::kNoise);
      const BeamformerWeights gev = gev_vector(xx, nn);
      const BeamformerWeights opt = ban_scale(gev, nn);
      const double a = posterior_snr(gev.w[0], pair.xx, pair.nn), b = posterior_snr(opt.w[0], pair.xx, pair.nn);
      worst_snr = std::max(worst_snr, std::abs(a - b) / std::abs(a));
      const ComplexVector u = oracle::random_unit(rng, m);
      const double g = ban_gain(u / u.norm(), ComplexMatrix::Identity(m, m));
      worst_identity = std::max(worst_identity, std::abs(g * std::sqrt(static_cast<double>(m)) - 1.0));
    }
  }
  verdict("ban_invariance", worst_snr <= 1e-12 && worst_identity <= 4 * std::numeric_limits<double>::epsilon(),
          fmt("100 pairs M=2..6: posterior SNR rel change %.1e <= 1e-12; Phi_NN=I scale*sqrt(M)-1 = %.1e",
              worst_snr, worst_identity));
}

void signal_exactness() {
  StftConfig cfg;
  oracle::Rng rng(400);
  std::normal_distribution<double> g;
  double worst_db = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 16000 + 97 * trial;
    Eigen::MatrixXd wave(1, n);
    for (int i = 0; i < n; ++i) wave(0, i) = g(rng);
    const Eigen::VectorXd back = istft(stft(wave, cfg), cfg);
    double err = 0.0, energy = 0.0;
    for (int i = cfg.win_len; i < n - cfg.win_len; ++i) {
      err += std::pow(back(i) - wave(0, i), 2);
      energy += wave(0, i) * wave(0, i);
    }
    worst_db = std::max(worst_db, 10.0 * std::log10(err / energy));
  }

  long median_mismatch = 0, cells = 0;
  std::uniform_real_distribution<double> u;
  for (int m : {1, 2, 3, 5, 6}) {
    std::vector<Eigen::MatrixXd> masks(m, Eigen::MatrixXd(40, 33));
    for (auto& mk : masks)
      for (Eigen::Index i = 0; i < mk.size(); ++i) mk.data()[i] = i % 7 == 0 ? 0.5 : u(rng);  // ties included
    const Eigen::MatrixXd med = median_mask(masks);
    for (Eigen::Index t = 0; t < med.rows(); ++t)
      for (Eigen::Index f = 0; f < med.cols(); ++f, ++cells) {
        std::vector<double> v;
        for (const auto& mk : masks) v.push_back(mk(t, f));
        median_mismatch += med(t, f) != oracle::sorted_median(v);
      }
  }

  long cov_mismatch = 0;
  double odd_scale = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    ComplexSpectrogram y(4, 30, 17);
    for (auto& v : y.data()) v = {g(rng), g(rng)};
    Eigen::MatrixXd mask(30, 17);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = u(rng);
    const auto base = spatial_covariance(y, mask, CovKind::kSpeech);
    for (double c : {0.5, 0.25, 0.125, 0x1p-10}) {
      const auto scaled = spatial_covariance(y, c * mask, CovKind::kSpeech);
      for (int f = 0; f < 17; ++f) cov_mismatch += scaled.phi[f] != base.phi[f];
    }
    const auto odd = spatial_covariance(y, 0.3 * mask, CovKind::kSpeech);
    for (int f = 0; f < 17; ++f)
      odd_scale = std::max(odd_scale, (odd.phi[f] - base.phi[f]).norm() / base.phi[f].norm());
  }
  verdict("signal_exactness", worst_db < -60.0 && median_mismatch == 0 && cov_mismatch == 0,
          fmt("stft round trip %.1f dB < -60 dB; median %ld/%ld cells differ from sorting; covariance under "
              "power-of-two mask scales %ld bins differ (scale 0.3: rel %.1e)",
              worst_db, median_mismatch, cells, cov_mismatch, odd_scale));
}

// Pretraining shared by the gain and adaptation criteria.
SystemSetup acceptance_setup() {
  SystemSetup s;
  s.scenes_per_speaker = 8;
  s.mask_train.epochs = 20;
  s.am_train.epochs = 10;
  s.seed = 0;
  return s;
}

void beamforming_gain(const System& sys) {
  SceneConfig templ;
  templ.channels = 6;
  templ.noise = NoiseKind::kCoherentPoint;
  templ.snr_db = 0.0;
  const std::vector<std::string> speakers = pretraining_speakers();
  std::vector<Scene> scenes;
  for (int i = 0; i < 10; ++i) {
    const auto one = speaker_scenes(templ, speakers[i % speakers.size()], 1, derive_seed(7, "acceptance-gain", i), "gain");
    scenes.push_back(one.front());
  }
  double min_ideal = std::numeric_limits<double>::infinity(), sum_ideal = 0.0, sum_learned = 0.0, worst_gap = 0.0;
  for (const Scene& s : scenes) {
    const double ideal = snr_gain(weights_from_masks(sys, s.y, s.ideal.speech, s.ideal.noise), s).gain_db;
    const double learned = snr_gain(pipeline_forward(sys, s.y).w, s).gain_db;
    min_ideal = std::min(min_ideal, ideal);
    sum_ideal += ideal;
    sum_learned += learned;
    worst_gap = std::max(worst_gap, ideal - learned);
  }
  const double gap = (sum_ideal - sum_learned) / 10.0;
  note(fmt("ideal-mask gain: min %.2f dB, mean %.2f dB (>= 6 dB required) %s", min_ideal, sum_ideal / 10.0,
           min_ideal >= 6.0 ? "ok" : "miss"));
  note(fmt("learned-mask gain: mean %.2f dB, %.2f dB below ideal (<= 3 dB required, worst scene %.2f dB) %s",
           sum_learned / 10.0, gap, worst_gap, gap <= 3.0 ? "ok" : "miss"));
  verdict("beamforming_gain", min_ideal >= 6.0 && gap <= 3.0,
          fmt("10 scenes M=6 coherent point 0 dB: ideal %.2f dB (min %.2f), learned %.2f dB, gap %.2f dB",
              sum_ideal / 10.0, min_ideal, sum_learned / 10.0, gap));
}

void adaptation(const System& sys, double pretrain_seconds) {
  const auto t0 = clk::now();
  SceneConfig templ;
  templ.noise = NoiseKind::kCoherentPoint;
  templ.snr_db = 0.0;
  const std::string mel_digest_pre = [&] {
    ParamStore p;
    p.add("mel", sys.mel.weights, false);
    return p.digest();
  }();
  const std::string am_digest = sys.am.digest();

  int oracle_ok = 0, argmax_ok = 0, isolation_ok = 0, runs = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto utts = speaker_scenes(templ, "E", 10, seed, "adapt");
    const auto held = speaker_scenes(templ, "E", 10, seed, "heldout");
    for (TargetMode mode : {TargetMode::kOracle, TargetMode::kFirstPassArgmax}) {
      AdaptConfig cfg;
      cfg.target_mode = mode;
      const AdaptResult r = adapt_mask_estimator(utts, first_pass_targets(utts, sys, mode), cfg, sys, &held);
      const AdaptReport& rep = r.report;
      ++runs;
      isolation_ok += rep.am_digest_pre == am_digest && rep.am_digest_post == am_digest && sys.am.digest() == am_digest;
      if (mode == TargetMode::kOracle) {
        const double rel = 1.0 - rep.post.ce_loss / rep.pre.ce_loss;
        const bool ok = rel >= 0.05 && rep.post.output_snr_db >= rep.pre.output_snr_db;
        oracle_ok += ok;
        note(fmt("seed %d oracle: held-out CE %.4f -> %.4f (%.1f%%), output SNR %.2f -> %.2f dB %s", int(seed),
                 rep.pre.ce_loss, rep.post.ce_loss, 100.0 * rel, rep.pre.output_snr_db, rep.post.output_snr_db,
                 ok ? "ok" : "miss"));
      } else {
        const bool ok = rep.post.target_ce_loss < rep.pre.target_ce_loss;
        argmax_ok += ok;
        note(fmt("seed %d argmax: held-out CE vs first-pass targets %.4f -> %.4f %s; vs true classes %.4f -> %.4f, "
                 "output SNR %.2f -> %.2f dB",
                 int(seed), rep.pre.target_ce_loss, rep.post.target_ce_loss, ok ? "ok" : "miss", rep.pre.ce_loss,
                 rep.post.ce_loss, rep.pre.output_snr_db, rep.post.output_snr_db));
      }
    }
  }
  const double t = seconds_since(t0) + pretrain_seconds;
  verdict("adaptation_effect", oracle_ok == 5 && argmax_ok >= 4 && t < 600.0,
          fmt("oracle %d/5 seeds (>= 5%% CE cut, SNR kept), argmax %d/5 (>= 4), %.0f s < 600 s incl. pretraining",
              oracle_ok, argmax_ok, t));

  ParamStore mel_after;
  mel_after.add("mel", sys.mel.weights, false);
  verdict("freeze_isolation", isolation_ok == runs && mel_after.digest() == mel_digest_pre,
          fmt("%d/%d runs with acoustic-model digest unchanged, mel bank digest unchanged", isolation_ok, runs));
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by name; none runs everything.
  const std::vector<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const char* name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  auto guarded = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      verdict(name, false, std::string("threw: ") + e.what());
    }
  };
  const auto t0 = clk::now();
  if (wanted("gradient_correctness")) guarded("gradient_correctness", gradient_correctness);
  if (wanted("eigensolver_oracle")) guarded("eigensolver_oracle", eigensolver_oracle);
  if (wanted("gev_optimality")) guarded("gev_optimality", gev_optimality);
  if (wanted("ban_invariance")) guarded("ban_invariance", ban_invariance);
  if (wanted("signal_exactness")) guarded("signal_exactness", signal_exactness);

  const bool gain = wanted("beamforming_gain"), adapt = wanted("adaptation_effect") || wanted("freeze_isolation");
  if (gain || adapt) guarded(gain ? "beamforming_gain" : "adaptation_effect", [&] {
    const auto tp = clk::now();
    const BuiltSystem built = build_system(acceptance_setup());
    const double pretrain_seconds = seconds_since(tp);
    note(fmt("pretraining on speakers A-D: %.0f s, mask BCE %.4f -> %.4f, AM CE %.4f -> %.4f", pretrain_seconds,
             built.mask_loss.front(), built.mask_loss.back(), built.am_loss.front(), built.am_loss.back()));
    if (gain) beamforming_gain(built.sys);
    if (adapt) adaptation(built.sys, pretrain_seconds);
  });

  std::printf("%s: %d criteria failed, %.0f s total\n", failures ? "FAILED" : "ALL PASSED", failures,
              seconds_since(t0));
  return failures;
}
