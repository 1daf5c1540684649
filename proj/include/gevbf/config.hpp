#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gevbf/adapt.hpp"
#include "gevbf/beamform.hpp"

namespace gevbf {

// Everything a CLI invocation can be told. Sections map 1:1 onto the INI file;
// `to_text()` lists every key so a run can be reproduced from its own dump.
struct RunConfig {
  std::uint64_t seed = 0;  // root of the seeding tree, see README

  SceneConfig scene;  // template for simulate/eval; stft lives here too
  int scene_count = 4;

  SystemSetup pretrain;

  BeamformerKind beamformer = BeamformerKind::kGevBan;
  int k_iters = kDefaultQrIterations;
  double loading = kDefaultLoading;
  bool dump_masks = true;

  AdaptConfig adapt;
  std::string adapt_speaker = "E";
  int adapt_utterances = 10;
  int adapt_held_out = 10;

  std::string eval_speaker = "E";
  int eval_scenes = 10;

  int gradcheck_seeds = 20;
  double gradcheck_eps = 1e-5;
  double gradcheck_tol = 1e-4;
  std::vector<std::string> gradcheck_ops;  // empty = every registered op

  std::string mask_ckpt, am_ckpt, input;  // empty checkpoint paths resolve inside --out

  // Copies the shared stft/beamformer settings into the nested configs.
  void sync();
  void validate() const;
  std::string to_text() const;
  std::vector<std::string> keys() const;
};

// Applies `section.key = value` to `cfg`. Unknown keys are invalid-config and
// name the key; unparsable values are parse errors.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// INI text -> config. Keys outside a section are rejected.
RunConfig parse_run_config(const std::string& ini_text);

// Defaults, then the file (if any), then `--set` overrides in order; finally
// sync() and validate().
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

const char* to_string(BeamformerKind kind);
BeamformerKind parse_beamformer_kind(const std::string& text);

}  // namespace gevbf
