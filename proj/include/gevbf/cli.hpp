#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "gevbf/config.hpp"
#include "gevbf/error.hpp"
#include "gevbf/pipeline.hpp"

namespace gevbf {

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitParse = 2,
  kExitValidation = 3,
  kExitNumerical = 4,
  kExitGradcheck = 5,
};

int exit_code_for(ErrorKind kind);

// Entry point of the `gevbf` executable; `args` excludes argv[0].
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Mask net + frozen acoustic model restored from checkpoints; the STFT comes
// from `cfg` and must agree with the mask net's input width.
System load_system(const RunConfig& cfg, const std::string& mask_path, const std::string& am_path);

}  // namespace gevbf
