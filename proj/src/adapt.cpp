#include "gevbf/adapt.hpp"

#include <cmath>
#include <exception>

#include "gevbf/error.hpp"
#include "gevbf/grad.hpp"
#include "gevbf/random.hpp"

namespace gevbf {

const char* to_string(TargetMode mode) {
  return mode == TargetMode::kOracle ? "oracle" : "first_pass_argmax";
}

TargetMode parse_target_mode(const std::string& text) {
  if (text == "oracle") return TargetMode::kOracle;
  if (text == "first_pass_argmax") return TargetMode::kFirstPassArgmax;
  fail(ErrorKind::kInvalidConfig, "unknown target mode " + text);
}

void AdaptConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::kInvalidConfig, "adapt lr must be > 0");
  require(epochs >= 1, ErrorKind::kInvalidConfig, "adapt epochs must be >= 1");
  require(k_iters >= 1, ErrorKind::kInvalidConfig, "adapt k_iters must be >= 1");
  require(loading >= 0.0, ErrorKind::kInvalidConfig, "adapt loading must be >= 0");
}

std::vector<StateSequence> first_pass_targets(const std::vector<Scene>& utterances, const System& sys,
                                              TargetMode mode) {
  require(sys.initialized(), ErrorKind::kState, "first pass needs a pretrained system");
  std::vector<StateSequence> out(utterances.size());
  if (mode == TargetMode::kOracle) {
    for (std::size_t i = 0; i < utterances.size(); ++i) out[i] = utterances[i].classes;
    return out;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    try {
      out[i] = argmax_states(pipeline_forward(sys, utterances[i].y).posteriors);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

namespace {

EvalMetrics summarize(const std::vector<PipelineRecord>& recs, const std::vector<Scene>& scenes,
                      const std::vector<StateSequence>* targets = nullptr) {
  EvalMetrics m;
  m.utterances = static_cast<int>(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    m.ce_loss += ce_loss(recs[i].posteriors, scenes[i].classes);
    m.target_ce_loss += targets ? ce_loss(recs[i].posteriors, (*targets)[i]) : ce_loss(recs[i].posteriors, scenes[i].classes);
    m.frame_accuracy += frame_accuracy(recs[i].posteriors, scenes[i].classes);
    const SnrReport r = snr_gain(recs[i].w, scenes[i]);
    m.output_snr_db += r.output_db;
    m.snr_gain_db += r.gain_db;
  }
  const double n = static_cast<double>(scenes.size());
  m.ce_loss /= n;
  m.target_ce_loss /= n;
  m.frame_accuracy /= n;
  m.output_snr_db /= n;
  m.snr_gain_db /= n;
  return m;
}

template <class Fn>
void for_each_scene(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

EvalMetrics evaluate(const System& sys, const std::vector<Scene>& scenes, const std::vector<StateSequence>* targets) {
  require(!scenes.empty(), ErrorKind::kInvalidInput, "evaluation needs at least one scene");
  require(!targets || targets->size() == scenes.size(), ErrorKind::kShape, "one target sequence per scene");
  std::vector<PipelineRecord> recs(scenes.size());
  for_each_scene(scenes.size(), [&](std::size_t i) { recs[i] = pipeline_forward(sys, scenes[i].y); });
  return summarize(recs, scenes, targets);
}

EvalMetrics evaluate_ideal(const System& sys, const std::vector<Scene>& scenes) {
  require(!scenes.empty(), ErrorKind::kInvalidInput, "evaluation needs at least one scene");
  require(sys.initialized(), ErrorKind::kState, "evaluation needs a pretrained system");
  std::vector<PipelineRecord> recs(scenes.size());
  for_each_scene(scenes.size(), [&](std::size_t i) {
    PipelineRecord& r = recs[i];
    r.w = weights_from_masks(sys, scenes[i].y, scenes[i].ideal.speech, scenes[i].ideal.noise);
    r.enhanced = apply_beamformer(r.w, scenes[i].y);
    r.posteriors = am_forward(log_mel_frames(power_spectrum(r.enhanced), sys.mel), sys.am_cfg, sys.am);
  });
  return summarize(recs, scenes);
}

AdaptResult adapt_mask_estimator(const std::vector<Scene>& utterances, const std::vector<StateSequence>& targets,
                                 const AdaptConfig& cfg, const System& sys, const std::vector<Scene>* held_out) {
  cfg.validate();
  require(!utterances.empty(), ErrorKind::kInvalidInput, "adaptation needs at least one utterance");
  require(targets.size() == utterances.size(), ErrorKind::kShape, "one target sequence per utterance");
  require(sys.initialized(), ErrorKind::kState, "adaptation needs a pretrained system");
  if (!sys.am.frozen()) fail(ErrorKind::kFreezeViolation, "acoustic model must be frozen before adaptation");

  System work = sys;
  work.k_iters = cfg.k_iters;
  work.loading = cfg.loading;
  const std::vector<Scene>& report_set = held_out ? *held_out : utterances;

  AdaptResult res;
  res.report.utterances = static_cast<int>(utterances.size());
  res.report.am_digest_pre = sys.am.digest();
  const std::vector<StateSequence> report_targets = first_pass_targets(report_set, work, cfg.target_mode);
  res.report.pre = evaluate(work, report_set, &report_targets);

  const std::size_t n = utterances.size();
  const double share = 1.0 / static_cast<double>(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<ParamStore> partial(n);
    std::vector<double> losses(n);
    for_each_scene(n, [&](std::size_t i) {
      partial[i] = work.mask;
      partial[i].zero_grad();
      const PipelineRecord rec = pipeline_forward(work, utterances[i].y, &targets[i]);
      losses[i] = rec.loss;
      pipeline_vjp(work, rec, share, partial[i]);
    });
    // serial reduction in utterance order keeps the update reproducible
    work.mask.zero_grad();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      work.mask.add_grads(partial[i]);
      loss += losses[i] * share;
    }
    res.report.epoch_loss.push_back(loss);
    work.mask.sgd_step(cfg.lr);
  }
  work.mask.zero_grad();

  res.report.post = evaluate(work, report_set, &report_targets);
  res.report.am_digest_post = work.am.digest();
  res.mask = std::move(work.mask);
  return res;
}

std::vector<Scene> speaker_scenes(const SceneConfig& templ, const std::string& speaker, int count, std::uint64_t seed,
                                  const std::string& tag) {
  std::vector<Scene> out(count);
  for_each_scene(static_cast<std::size_t>(count), [&](std::size_t i) {
    SceneConfig c = templ;
    c.speaker = speaker_preset(speaker);
    c.seed = derive_seed(seed, tag + "/" + speaker, i);
    out[i] = make_scene(c);
  });
  return out;
}

std::vector<Scene> pretraining_scenes(const SystemSetup& setup) {
  const int per = setup.scenes_per_speaker;
  require(per >= 1 && !setup.speakers.empty(), ErrorKind::kInvalidConfig, "pretraining needs scenes");
  const std::size_t total = setup.speakers.size() * static_cast<std::size_t>(per);
  std::vector<Scene> out(total);
  static const NoiseKind kinds[3] = {NoiseKind::kCoherentPoint, NoiseKind::kDiffuseWhite, NoiseKind::kBabbleMix};
  for_each_scene(total, [&](std::size_t k) {
    const std::string& spk = setup.speakers[k / per];
    const std::size_t i = k % per;
    SceneConfig c = setup.scene;
    c.speaker = speaker_preset(spk);
    c.seed = derive_seed(setup.seed, "pretrain-scene/" + spk, i);
    Rng rng(derive_seed(c.seed, "pretrain-snr"));
    c.snr_db = std::uniform_real_distribution<double>(setup.snr_low, setup.snr_high)(rng);
    c.noise = kinds[i % 3];
    out[k] = make_scene(c);
  });
  return out;
}

BuiltSystem build_system(const SystemSetup& setup) {
  const std::vector<Scene> scenes = pretraining_scenes(setup);
  BuiltSystem out;
  System& sys = out.sys;
  sys.stft = setup.scene.stft;
  sys.mel = MelBank::build(sys.stft, setup.n_mels);
  sys.mask_cfg = setup.mask_cfg;
  sys.mask_cfg.input_dim = sys.stft.num_bins();
  sys.am_cfg = setup.am_cfg;
  sys.am_cfg.n_features = setup.n_mels;
  sys.am_cfg.n_states = setup.scene.n_classes;
  sys.k_iters = setup.k_iters;
  sys.loading = setup.loading;

  std::vector<MaskTrainingExample> mask_data;
  std::vector<AmExample> am_data;
  for (const Scene& s : scenes) {
    for (auto& ex : mask_examples(s)) mask_data.push_back(std::move(ex));
    const int channels = std::min(setup.am_channels, s.y.channels());
    for (int m = 0; m < channels; ++m) am_data.push_back({channel_features(s.y, m, sys.mel), s.classes});
  }
  PretrainResult masks = pretrain_supervised(mask_data, sys.mask_cfg, setup.mask_train);
  sys.mask = std::move(masks.params);
  out.mask_loss = std::move(masks.loss);
  AmTrainResult am = am_train(am_data, sys.am_cfg, setup.am_train);
  sys.am = std::move(am.params);
  sys.am.freeze();
  out.am_loss = std::move(am.loss);
  return out;
}

}  // namespace gevbf
