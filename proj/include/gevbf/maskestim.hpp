#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gevbf/nn.hpp"
#include "gevbf/params.hpp"

namespace gevbf {

struct MaskNetConfig {
  int input_dim = 201;
  std::vector<int> hidden_dims{64, 128, 128};
  // Bidirectional tanh recurrent first layer; hidden_dims[0] units per direction.
  bool recurrent_first_layer = false;
  std::uint64_t seed = 0;

  int output_dim() const { return 2 * input_dim; }
  void validate() const;
  std::string to_text() const;
  static MaskNetConfig from_text(const std::string& text);
};

struct MaskPair {
  Eigen::MatrixXd speech;  // [T, F]
  Eigen::MatrixXd noise;   // [T, F]
};

ParamStore init_params(const MaskNetConfig& cfg);

struct RnnCache {
  Eigen::MatrixXd fw, bw;  // [T, H] hidden states
};

struct MaskNetRecord {
  Eigen::MatrixXd input;  // standardized features [T, F]
  RnnCache rnn;
  nn::MlpCache mlp;
  Eigen::MatrixXd logits;  // [T, 2F]; [0, F) noise, [F, 2F) speech
  MaskPair out;
};

// Per-utterance standardized log magnitude.
Eigen::MatrixXd mask_features(const Eigen::MatrixXd& magnitude);

MaskPair mask_forward(const Eigen::MatrixXd& magnitude, const MaskNetConfig& cfg, const ParamStore& params,
                      MaskNetRecord* record = nullptr);

// Accumulates dL/dparams into `grads` (freeze-violation if frozen) given
// cotangents on the two output masks.
void mask_backward(const MaskNetConfig& cfg, const ParamStore& params, const MaskNetRecord& record,
                   const Eigen::MatrixXd& noise_bar, const Eigen::MatrixXd& speech_bar, ParamStore& grads);

// Element-wise median over channels; even counts average the two central values.
Eigen::MatrixXd median_mask(const std::vector<Eigen::MatrixXd>& per_channel);
// Routes the pooled cotangent to the median-defining channel(s), split 0.5/0.5
// for even counts.
std::vector<Eigen::MatrixXd> median_mask_vjp(const std::vector<Eigen::MatrixXd>& per_channel,
                                             const Eigen::MatrixXd& pooled_bar);

struct MaskTrainingExample {
  Eigen::MatrixXd magnitude;      // [T, F] single channel
  Eigen::MatrixXd speech_target;  // [T, F] in [0, 1]
  Eigen::MatrixXd noise_target;   // [T, F] in [0, 1]
};

struct PretrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch = 4;  // examples per Adam step
  std::uint64_t seed = 0;
};

struct PretrainResult {
  ParamStore params;
  std::vector<double> loss;  // [epochs + 1]: full-data BCE before training and after each epoch
};

// Mean binary cross-entropy over both masks.
double mask_bce(const MaskPair& pred, const MaskTrainingExample& target);
double bce(const Eigen::MatrixXd& p, const Eigen::MatrixXd& target);

PretrainResult pretrain_supervised(const std::vector<MaskTrainingExample>& data, const MaskNetConfig& cfg,
                                   const PretrainConfig& train);
// Continues training an existing store.
PretrainResult pretrain_supervised(const std::vector<MaskTrainingExample>& data, const MaskNetConfig& cfg,
                                   const PretrainConfig& train, ParamStore params);

}  // namespace gevbf
