#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gevbf/nn.hpp"
#include "gevbf/params.hpp"

namespace gevbf {

using StateSequence = std::vector<int>;

// Frame classifier over context-stacked, normalized log-mel features.
struct AmConfig {
  int n_features = 80;
  int n_states = 8;
  int context = 2;  // frames each side, edge frames replicated
  std::vector<int> hidden_dims{128, 128};
  std::uint64_t seed = 0;

  int input_width() const { return n_features * (2 * context + 1); }
  void validate() const;
  std::string to_text() const;
  static AmConfig from_text(const std::string& text);
};

constexpr double kPosteriorFloor = 1e-12;

// Holds the trainable layers plus the constant feature normalizer
// (`feat_mean`, `feat_std`, both [1, n_features]).
ParamStore am_init(const AmConfig& cfg);

struct AmRecord {
  Eigen::MatrixXd stacked;  // normalized, context-stacked input [T, width]
  nn::MlpCache mlp;
  Eigen::MatrixXd posteriors;
};

// features [T, n_features] -> posteriors [T, n_states].
Eigen::MatrixXd am_forward(const Eigen::MatrixXd& features, const AmConfig& cfg, const ParamStore& params,
                           AmRecord* record = nullptr);

// dL/dfeatures given dL/dlogits. Parameter gradients go to `grads` if non-null.
Eigen::MatrixXd am_backward(const AmConfig& cfg, const ParamStore& params, const AmRecord& record,
                            const Eigen::MatrixXd& logits_bar, ParamStore* grads);

// Mean over frames of -ln max(p_target, floor).
double ce_loss(const Eigen::MatrixXd& posteriors, const StateSequence& targets);
// d ce_loss / d logits; frames whose target posterior sits on the floor get zero.
Eigen::MatrixXd ce_logits_grad(const Eigen::MatrixXd& posteriors, const StateSequence& targets);

double frame_accuracy(const Eigen::MatrixXd& posteriors, const StateSequence& targets);
StateSequence argmax_states(const Eigen::MatrixXd& posteriors);

struct AmExample {
  Eigen::MatrixXd features;  // [T, n_features]
  StateSequence states;
};

struct AmTrainConfig {
  int epochs = 20;
  double lr = 1e-3;
  int batch = 8;
  std::uint64_t seed = 0;
};

struct AmTrainResult {
  ParamStore params;
  std::vector<double> loss;  // [epochs + 1], mean CE before training and after each epoch
};

// Fits the normalizer on the whole dataset, then trains with Adam. The returned
// store is not frozen; callers freeze it before adaptation.
AmTrainResult am_train(const std::vector<AmExample>& data, const AmConfig& cfg, const AmTrainConfig& train);

}  // namespace gevbf
