#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gevbf/pipeline.hpp"
#include "gevbf/sim.hpp"

namespace gevbf {

enum class TargetMode { kOracle, kFirstPassArgmax };

const char* to_string(TargetMode mode);
TargetMode parse_target_mode(const std::string& text);

struct AdaptConfig {
  double lr = 0.05;
  int epochs = 20;
  int k_iters = kDefaultQrIterations;
  double loading = kDefaultLoading;
  TargetMode target_mode = TargetMode::kOracle;

  void validate() const;
};

struct EvalMetrics {
  double ce_loss = 0.0;         // against the oracle classes
  double frame_accuracy = 0.0;  // against the oracle classes
  // Against the targets the adaptation mode would produce for these scenes
  // (oracle classes, or the unadapted system's argmax); equals ce_loss when
  // no targets were supplied.
  double target_ce_loss = 0.0;
  double output_snr_db = 0.0;   // mean over scenes
  double snr_gain_db = 0.0;     // mean over scenes
  int utterances = 0;
};

struct AdaptReport {
  std::vector<double> epoch_loss;  // adaptation-set loss before each update
  EvalMetrics pre, post;
  int utterances = 0;
  std::string am_digest_pre, am_digest_post;
};

struct AdaptResult {
  ParamStore mask;
  AdaptReport report;
};

// Oracle mode passes the simulator classes through; argmax mode decodes the
// unadapted system's posteriors on the beamformed features.
std::vector<StateSequence> first_pass_targets(const std::vector<Scene>& utterances, const System& sys,
                                              TargetMode mode);

// Plain gradient descent on the mask estimator only, one update per epoch on
// the gradient averaged over all utterances. Metrics in the report are taken
// on `held_out` when given, otherwise on the adaptation utterances.
AdaptResult adapt_mask_estimator(const std::vector<Scene>& utterances, const std::vector<StateSequence>& targets,
                                 const AdaptConfig& cfg, const System& sys,
                                 const std::vector<Scene>* held_out = nullptr);

EvalMetrics evaluate(const System& sys, const std::vector<Scene>& scenes,
                     const std::vector<StateSequence>* targets = nullptr);
// Same metrics with the ideal masks fed to the beamformer instead of the network's.
EvalMetrics evaluate_ideal(const System& sys, const std::vector<Scene>& scenes);

// Pretraining of mask estimator and acoustic model on simulated scenes.
struct SystemSetup {
  SceneConfig scene;                      // template; seed, speaker, noise and snr are set per scene
  std::vector<std::string> speakers = pretraining_speakers();
  int scenes_per_speaker = 8;
  double snr_low = -5.0, snr_high = 15.0;
  MaskNetConfig mask_cfg;
  PretrainConfig mask_train;
  AmConfig am_cfg;
  AmTrainConfig am_train;
  int am_channels = 2;  // single-channel utterances per scene fed to the acoustic model
  int n_mels = 80;
  int k_iters = kDefaultQrIterations;
  double loading = kDefaultLoading;
  std::uint64_t seed = 0;
};

struct BuiltSystem {
  System sys;  // acoustic model frozen
  std::vector<double> mask_loss, am_loss;
};

std::vector<Scene> pretraining_scenes(const SystemSetup& setup);
BuiltSystem build_system(const SystemSetup& setup);

// `count` scenes of one speaker with seeds derived from (seed, tag).
std::vector<Scene> speaker_scenes(const SceneConfig& templ, const std::string& speaker, int count, std::uint64_t seed,
                                  const std::string& tag);

}  // namespace gevbf
