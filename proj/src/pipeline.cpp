#include "gevbf/pipeline.hpp"

#include "gevbf/error.hpp"
#include "gevbf/grad.hpp"

namespace gevbf {

PipelineRecord pipeline_forward(const System& sys, const ComplexSpectrogram& y, const StateSequence* targets) {
  require(sys.initialized(), ErrorKind::kState, "system is not initialized");
  require(y.bins() == sys.mask_cfg.input_dim, ErrorKind::kShape, "spectrogram bins do not match the mask net");
  require(sys.mel.num_bins() == y.bins(), ErrorKind::kShape, "mel bank bins do not match the spectrogram");
  PipelineRecord rec;
  rec.y = y;
  const int m_count = y.channels();
  rec.mask_nets.resize(m_count);
  rec.speech_ch.resize(m_count);
  rec.noise_ch.resize(m_count);
  for (int m = 0; m < m_count; ++m) {
    const MaskPair p = mask_forward(y.channel(m).cwiseAbs(), sys.mask_cfg, sys.mask, &rec.mask_nets[m]);
    rec.speech_ch[m] = p.speech;
    rec.noise_ch[m] = p.noise;
  }
  rec.speech = median_mask(rec.speech_ch);
  rec.noise = median_mask(rec.noise_ch);
  rec.phi_xx = spatial_covariance(y, rec.speech, CovKind::kSpeech, DegeneratePolicy::kFlag);
  rec.phi_nn = spatial_covariance(y, rec.noise, CovKind::kNoise, DegeneratePolicy::kFlag);
  rec.w_gev = gev_vector(rec.phi_xx, rec.phi_nn, sys.k_iters, sys.loading, &rec.gev);
  rec.w = ban_scale(rec.w_gev, rec.phi_nn);
  rec.enhanced = apply_beamformer(rec.w, y);
  rec.power = power_spectrum(rec.enhanced);
  rec.logmel = log_mel_frames(rec.power, sys.mel);
  rec.posteriors = am_forward(rec.logmel, sys.am_cfg, sys.am, &rec.am);
  if (targets) {
    rec.targets = *targets;
    rec.loss = ce_loss(rec.posteriors, rec.targets);
    rec.has_targets = true;
  }
  return rec;
}

void pipeline_vjp(const System& sys, const PipelineRecord& rec, double loss_bar, ParamStore& mask_grads) {
  require(rec.has_targets, ErrorKind::kState, "pipeline record has no loss");
  require(rec.am.stacked.size() > 0 && !rec.gev.empty() && rec.mask_nets.size() == static_cast<std::size_t>(rec.y.channels()),
          ErrorKind::kState, "pipeline record is incomplete");
  const int bins = rec.y.bins();

  const Eigen::MatrixXd logits_bar = loss_bar * ce_logits_grad(rec.posteriors, rec.targets);
  // the acoustic model only passes the cotangent through; its store is never written
  const Eigen::MatrixXd logmel_bar = am_backward(sys.am_cfg, sys.am, rec.am, logits_bar, nullptr);
  const Eigen::MatrixXd power_bar = log_mel_frames_vjp(rec.power, sys.mel, logmel_bar);
  const Eigen::MatrixXcd s_bar = power_spectrum_vjp(rec.enhanced, power_bar);
  const std::vector<ComplexVector> w_bar = apply_vjp(rec.y, s_bar);

  std::vector<ComplexMatrix> xx_bar(bins), nn_bar(bins);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < bins; ++f) {
    try {
      const int m = rec.y.channels();
      xx_bar[f] = ComplexMatrix::Zero(m, m);
      nn_bar[f] = ComplexMatrix::Zero(m, m);
      if (rec.gev[f].degenerate || rec.w_gev.flagged[f]) continue;
      const BanBar ban = ban_vjp(rec.w_gev.w[f], rec.phi_nn.phi[f], w_bar[f]);
      const CovariancePairBar eig =
          eig_chain_vjp(rec.phi_xx.phi[f], rec.phi_nn.phi[f], rec.gev[f], sys.loading, ban.w_bar);
      xx_bar[f] = eig.phi_xx_bar;
      // BAN's covariance cotangent projected onto Hermitian directions
      nn_bar[f] = eig.phi_nn_bar + hermitian_part(ban.phi_nn_bar);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  const Eigen::MatrixXd speech_bar = cov_vjp(rec.y, rec.speech, rec.phi_xx, xx_bar);
  const Eigen::MatrixXd noise_bar = cov_vjp(rec.y, rec.noise, rec.phi_nn, nn_bar);
  const auto speech_ch_bar = median_mask_vjp(rec.speech_ch, speech_bar);
  const auto noise_ch_bar = median_mask_vjp(rec.noise_ch, noise_bar);
  // channel order fixed so accumulation is reproducible
  for (int m = 0; m < rec.y.channels(); ++m)
    mask_backward(sys.mask_cfg, sys.mask, rec.mask_nets[m], noise_ch_bar[m], speech_ch_bar[m], mask_grads);
}

Eigen::MatrixXd channel_features(const ComplexSpectrogram& y, int channel, const MelBank& mel) {
  return log_mel_frames(power_spectrum(y.channel(channel)), mel);
}

BeamformerWeights weights_from_masks(const System& sys, const ComplexSpectrogram& y, const Eigen::MatrixXd& speech,
                                     const Eigen::MatrixXd& noise) {
  return mask_beamformer(y, speech, noise, sys.k_iters, sys.loading);
}

}  // namespace gevbf
