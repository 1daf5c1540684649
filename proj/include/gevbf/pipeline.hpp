#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gevbf/am.hpp"
#include "gevbf/beamform.hpp"
#include "gevbf/maskestim.hpp"
#include "gevbf/params.hpp"
#include "gevbf/signal.hpp"

namespace gevbf {

// Mask estimator + GEV/BAN beamformer + log-mel + acoustic model.
struct System {
  StftConfig stft;
  MelBank mel;
  MaskNetConfig mask_cfg;
  ParamStore mask;
  AmConfig am_cfg;
  ParamStore am;
  int k_iters = kDefaultQrIterations;
  double loading = kDefaultLoading;

  bool initialized() const { return mask.size() > 0 && am.size() > 0 && mel.num_mels() > 0; }
};

// Immutable snapshot of one utterance's forward pass.
struct PipelineRecord {
  ComplexSpectrogram y;
  std::vector<MaskNetRecord> mask_nets;  // per channel
  std::vector<Eigen::MatrixXd> speech_ch, noise_ch;
  Eigen::MatrixXd speech, noise;  // median pooled
  SpatialCovariance phi_xx, phi_nn;
  std::vector<GevBinRecord> gev;
  BeamformerWeights w_gev, w;  // before / after BAN
  Eigen::MatrixXcd enhanced;    // [T, F]
  Eigen::MatrixXd power, logmel;
  AmRecord am;
  Eigen::MatrixXd posteriors;
  StateSequence targets;
  double loss = 0.0;  // NaN-free only when targets were given
  bool has_targets = false;
};

PipelineRecord pipeline_forward(const System& sys, const ComplexSpectrogram& y, const StateSequence* targets = nullptr);

// Accumulates loss_bar * dloss/dmask_params into `mask_grads` (normally
// sys.mask or a private copy with the same topology). Nothing else is touched.
void pipeline_vjp(const System& sys, const PipelineRecord& rec, double loss_bar, ParamStore& mask_grads);

// Log-mel of |Y_m|^2 for one channel, the features the acoustic model is trained on.
Eigen::MatrixXd channel_features(const ComplexSpectrogram& y, int channel, const MelBank& mel);

// Beamformer weights from given masks (bypassing the network).
BeamformerWeights weights_from_masks(const System& sys, const ComplexSpectrogram& y, const Eigen::MatrixXd& speech,
                                     const Eigen::MatrixXd& noise);

}  // namespace gevbf
