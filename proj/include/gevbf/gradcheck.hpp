#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gevbf/pipeline.hpp"
#include "gevbf/signal.hpp"

namespace gevbf {

struct GradCheckReport {
  std::string op;
  double max_rel_err = 0.0;
  std::size_t tested_entries = 0;
  double eps = 0.0;
  std::uint64_t seed = 0;
};

// Registered op names, in reporting order.
const std::vector<std::string>& gradcheck_ops();

// Central differences over every real degree of freedom of a random input
// point drawn from `seed`. The step is eps times the largest magnitude of the
// perturbed input, so eps is scale free. Per-entry relative error uses the
// denominator max(|analytic|, |numeric|, 1e-12).
GradCheckReport finite_diff_check(const std::string& op, std::uint64_t seed, double eps = 1e-5);

// M = 2, T = 6, F = 5 scene with a two-layer mask net and a frozen tiny
// acoustic model; used by the pipeline gradient check.
struct TinyScene {
  System sys;
  ComplexSpectrogram y;
  StateSequence targets;
};
TinyScene tiny_scene(std::uint64_t seed);

}  // namespace gevbf
