#include "gevbf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gevbf/adapt.hpp"
#include "gevbf/gradcheck.hpp"
#include "gevbf/matrix_io.hpp"
#include "gevbf/random.hpp"
#include "gevbf/wav.hpp"

namespace gevbf {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
      return kExitParse;
    case ErrorKind::kIo:
      return kExitIo;
    case ErrorKind::kSingularCovariance:
    case ErrorKind::kDegenerateMask:
    case ErrorKind::kDegenerate:
      return kExitNumerical;
    default:
      return kExitValidation;
  }
}

System load_system(const RunConfig& cfg, const std::string& mask_path, const std::string& am_path) {
  System sys;
  sys.stft = cfg.scene.stft;
  sys.k_iters = cfg.k_iters;
  sys.loading = cfg.loading;

  Checkpoint mk = load_checkpoint(mask_path);
  require(mk.kind == CheckpointKind::kMaskNet, ErrorKind::kInvalidInput, mask_path + " is not a mask checkpoint");
  sys.mask_cfg = MaskNetConfig::from_text(mk.config_text);
  init_params(sys.mask_cfg).require_same_topology(mk.store);
  require(sys.mask_cfg.input_dim == sys.stft.num_bins(), ErrorKind::kShape,
          "mask net expects " + std::to_string(sys.mask_cfg.input_dim) + " bins, stft gives " +
              std::to_string(sys.stft.num_bins()));
  sys.mask = std::move(mk.store);

  if (!am_path.empty()) {
    Checkpoint ak = load_checkpoint(am_path);
    require(ak.kind == CheckpointKind::kAcousticModel, ErrorKind::kInvalidInput, am_path + " is not an AM checkpoint");
    sys.am_cfg = AmConfig::from_text(ak.config_text);
    am_init(sys.am_cfg).require_same_topology(ak.store);
    sys.am = std::move(ak.store);
    sys.am.freeze();
    sys.mel = MelBank::build(sys.stft, sys.am_cfg.n_features);
  }
  return sys;
}

namespace {

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::string out_dir = "gevbf_out";
  std::optional<std::uint64_t> seed;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  std::ostream& log;

  std::string mask_path() const { return cfg.mask_ckpt.empty() ? (out / "mask.ckpt").string() : cfg.mask_ckpt; }
  std::string am_path() const { return cfg.am_ckpt.empty() ? (out / "am.ckpt").string() : cfg.am_ckpt; }
};

Context open_context(const Common& common, std::ostream& log) {
  std::optional<fs::path> file;
  if (common.config) file = *common.config;
  Context ctx{load_run_config(file, common.overrides, common.seed), common.out_dir, log};
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + ctx.out.string() + ": " + ec.message());
  std::ofstream(ctx.out / "config.ini") << ctx.cfg.to_text();
  return ctx;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write " + path.string());
  f << text;
}

Eigen::MatrixXd classes_column(const StateSequence& s) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(s.size()), 1);
  for (std::size_t i = 0; i < s.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = s[i];
  return out;
}

std::string scene_name(int i) {
  std::ostringstream os;
  os << "scene_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

int cmd_simulate(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  std::ostringstream manifest;
  manifest << "# name seed speaker noise snr_db channels samples frames\n";
  for (int i = 0; i < cfg.scene_count; ++i) {
    SceneConfig c = cfg.scene;
    c.seed = derive_seed(cfg.seed, "simulate", static_cast<std::uint64_t>(i));
    const Scene s = make_scene(c);
    const std::string name = scene_name(i);
    write_wav(ctx.out / (name + ".wav"), {c.stft.sample_rate, s.x_wave + s.n_wave}, WavFormat::kFloat32);
    write_wav(ctx.out / (name + "_speech.wav"), {c.stft.sample_rate, s.x_wave}, WavFormat::kFloat32);
    write_wav(ctx.out / (name + "_noise.wav"), {c.stft.sample_rate, s.n_wave}, WavFormat::kFloat32);
    write_matrix(ctx.out / (name + "_speech_mask.bin"), s.ideal.speech);
    write_matrix(ctx.out / (name + "_noise_mask.bin"), s.ideal.noise);
    write_matrix(ctx.out / (name + "_classes.bin"), classes_column(s.classes));
    write_matrix(ctx.out / (name + "_speech_ref.bin"), s.x.channel(c.reference_channel));
    manifest << name << " " << c.seed << " " << c.speaker.name << " " << to_string(c.noise) << " "
             << fmt(mixture_snr_db(s), 3) << " " << c.channels << " " << s.x_wave.cols() << " " << s.y.frames()
             << "\n";
  }
  write_text(ctx.out / "manifest.txt", manifest.str());
  ctx.log << "scenes=" << cfg.scene_count << "\nmanifest=" << (ctx.out / "manifest.txt").string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const BuiltSystem built = build_system(cfg.pretrain);
  const std::string mask_path = (ctx.out / "mask.ckpt").string(), am_path = (ctx.out / "am.ckpt").string();
  save_checkpoint(mask_path, {CheckpointKind::kMaskNet, built.sys.mask_cfg.to_text(), built.sys.mask_cfg.seed,
                              built.sys.mask});
  save_checkpoint(am_path,
                  {CheckpointKind::kAcousticModel, built.sys.am_cfg.to_text(), built.sys.am_cfg.seed, built.sys.am});
  std::ostringstream loss;
  loss << "# epoch mask_bce am_ce\n";
  const std::size_t n = std::max(built.mask_loss.size(), built.am_loss.size());
  for (std::size_t e = 0; e < n; ++e)
    loss << e << " " << (e < built.mask_loss.size() ? full(built.mask_loss[e]) : "-") << " "
         << (e < built.am_loss.size() ? full(built.am_loss[e]) : "-") << "\n";
  write_text(ctx.out / "pretrain_loss.txt", loss.str());
  ctx.log << "mask_ckpt=" << mask_path << "\nam_ckpt=" << am_path << "\nmask_loss_first=" << built.mask_loss.front()
          << "\nmask_loss_last=" << built.mask_loss.back() << "\nam_loss_first=" << built.am_loss.front()
          << "\nam_loss_last=" << built.am_loss.back() << "\nmask_digest=" << built.sys.mask.digest()
          << "\nam_digest=" << built.sys.am.digest() << "\n";
  return kExitOk;
}

int cmd_beamform(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  require(!cfg.input.empty(), ErrorKind::kInvalidConfig, "beamform needs paths.input");
  const WavData in = read_wav(cfg.input);
  require_sample_rate(in, cfg.scene.stft.sample_rate);
  const ComplexSpectrogram y = stft(in.samples, cfg.scene.stft);
  const int m = y.channels();

  Eigen::MatrixXcd enhanced;
  Eigen::MatrixXcd weights(y.bins(), m);
  if (m == 1) {
    // Selector: the single channel passes through untouched.
    enhanced = y.channel(0);
    weights.setOnes();
  } else {
    const System sys = load_system(cfg, ctx.mask_path(), "");
    std::vector<Eigen::MatrixXd> speech_ch, noise_ch;
    for (int c = 0; c < m; ++c) {
      const MaskPair p = mask_forward(y.channel(c).cwiseAbs(), sys.mask_cfg, sys.mask);
      speech_ch.push_back(p.speech);
      noise_ch.push_back(p.noise);
    }
    const Eigen::MatrixXd speech = median_mask(speech_ch), noise = median_mask(noise_ch);
    const BeamformerWeights w = cfg.beamformer == BeamformerKind::kGevBan
                                    ? weights_from_masks(sys, y, speech, noise)
                                    : mask_beamformer(y, speech, noise, cfg.k_iters, cfg.loading, cfg.beamformer);
    enhanced = apply_beamformer(w, y);
    for (int f = 0; f < y.bins(); ++f) weights.row(f) = w.w[f].transpose();
    if (cfg.dump_masks) {
      write_matrix(ctx.out / "speech_mask.bin", speech);
      write_matrix(ctx.out / "noise_mask.bin", noise);
    }
  }
  const Eigen::VectorXd wave = istft(ComplexSpectrogram::from_channel(enhanced, cfg.scene.stft), cfg.scene.stft);
  write_wav(ctx.out / "enhanced.wav", {in.sample_rate, wave.transpose()}, WavFormat::kFloat32);
  write_matrix(ctx.out / "weights.bin", weights);
  ctx.log << "channels=" << m << "\nframes=" << y.frames() << "\nenhanced=" << (ctx.out / "enhanced.wav").string()
          << "\n";
  return kExitOk;
}

void metrics_block(std::ostream& os, const std::string& prefix, const EvalMetrics& m) {
  os << prefix << "ce_loss=" << full(m.ce_loss) << "\n"
     << prefix << "frame_accuracy=" << full(m.frame_accuracy) << "\n"
     << prefix << "output_snr_db=" << full(m.output_snr_db) << "\n"
     << prefix << "snr_gain_db=" << full(m.snr_gain_db) << "\n"
     << prefix << "utterances=" << m.utterances << "\n";
}

std::string metrics_table(const std::vector<std::pair<std::string, EvalMetrics>>& cols) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "metric";
  for (const auto& [name, m] : cols) os << std::right << std::setw(12) << name;
  os << "\n";
  auto row = [&](const char* label, auto get) {
    os << std::left << std::setw(16) << label;
    for (const auto& [name, m] : cols) os << std::right << std::setw(12) << fmt(get(m));
    os << "\n";
  };
  row("ce_loss", [](const EvalMetrics& m) { return m.ce_loss; });
  row("frame_accuracy", [](const EvalMetrics& m) { return m.frame_accuracy; });
  row("output_snr_db", [](const EvalMetrics& m) { return m.output_snr_db; });
  row("snr_gain_db", [](const EvalMetrics& m) { return m.snr_gain_db; });
  return os.str();
}

int cmd_adapt(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const System sys = load_system(cfg, ctx.mask_path(), ctx.am_path());
  const std::uint64_t seed = derive_seed(cfg.seed, "adapt");
  const std::vector<Scene> utts = speaker_scenes(cfg.scene, cfg.adapt_speaker, cfg.adapt_utterances, seed, "adapt");
  const std::vector<Scene> held =
      speaker_scenes(cfg.scene, cfg.adapt_speaker, cfg.adapt_held_out, seed, "heldout");
  const std::vector<StateSequence> targets = first_pass_targets(utts, sys, cfg.adapt.target_mode);
  const AdaptResult r = adapt_mask_estimator(utts, targets, cfg.adapt, sys, held.empty() ? nullptr : &held);
  const AdaptReport& rep = r.report;

  const std::string ckpt = (ctx.out / "adapted_mask.ckpt").string();
  save_checkpoint(ckpt, {CheckpointKind::kMaskNet, sys.mask_cfg.to_text(), seed, r.mask});

  std::ostringstream os;
  os << "epoch  adapt_loss\n";
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
    os << std::left << std::setw(7) << e << fmt(rep.epoch_loss[e], 6) << "\n";
  os << "\n" << metrics_table({{"pre", rep.pre}, {"post", rep.post}});
  const double rel = rep.pre.ce_loss > 0.0 ? 1.0 - rep.post.ce_loss / rep.pre.ce_loss : 0.0;
  os << "\n[adapt_report]\n"
     << "target_mode=" << to_string(cfg.adapt.target_mode) << "\n"
     << "speaker=" << cfg.adapt_speaker << "\n"
     << "adapt_utterances=" << rep.utterances << "\n"
     << "evaluated_on=" << (held.empty() ? "adaptation_set" : "held_out") << "\n"
     << "epochs=" << cfg.adapt.epochs << "\n"
     << "lr=" << full(cfg.adapt.lr) << "\n";
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) os << "epoch_loss." << e << "=" << full(rep.epoch_loss[e]) << "\n";
  metrics_block(os, "pre.", rep.pre);
  metrics_block(os, "post.", rep.post);
  os << "ce_rel_reduction=" << full(rel) << "\n"
     << "am_digest_pre=" << rep.am_digest_pre << "\n"
     << "am_digest_post=" << rep.am_digest_post << "\n"
     << "am_unchanged=" << (rep.am_digest_pre == rep.am_digest_post ? "true" : "false") << "\n"
     << "adapted_mask_ckpt=" << ckpt << "\n";
  write_text(ctx.out / "adapt_report.txt", os.str());
  ctx.log << os.str();
  return kExitOk;
}

int cmd_eval(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const System sys = load_system(cfg, ctx.mask_path(), ctx.am_path());
  const std::vector<Scene> scenes =
      speaker_scenes(cfg.scene, cfg.eval_speaker, cfg.eval_scenes, derive_seed(cfg.seed, "eval"), "eval");
  const EvalMetrics learned = evaluate(sys, scenes);
  const EvalMetrics ideal = evaluate_ideal(sys, scenes);
  std::ostringstream os;
  os << metrics_table({{"learned", learned}, {"ideal", ideal}}) << "\n[eval_report]\n"
     << "speaker=" << cfg.eval_speaker << "\n";
  metrics_block(os, "learned.", learned);
  metrics_block(os, "ideal.", ideal);
  write_text(ctx.out / "eval_report.txt", os.str());
  ctx.log << os.str();
  return kExitOk;
}

int cmd_gradcheck(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const std::vector<std::string> ops = cfg.gradcheck_ops.empty() ? gradcheck_ops() : cfg.gradcheck_ops;
  std::ostringstream os;
  os << std::left << std::setw(16) << "op" << std::right << std::setw(14) << "max_rel_err" << std::setw(10)
     << "entries" << std::setw(8) << "seeds" << "  status\n";
  bool breach = false;
  std::ostringstream kv;
  for (const std::string& op : ops) {
    double worst = 0.0;
    std::size_t entries = 0;
    for (int s = 0; s < cfg.gradcheck_seeds; ++s) {
      const GradCheckReport r = finite_diff_check(op, cfg.seed + static_cast<std::uint64_t>(s), cfg.gradcheck_eps);
      worst = std::max(worst, std::isnan(r.max_rel_err) ? std::numeric_limits<double>::infinity() : r.max_rel_err);
      entries += r.tested_entries;
    }
    const bool ok = worst < cfg.gradcheck_tol;
    breach |= !ok;
    os << std::left << std::setw(16) << op << std::right << std::setw(14) << std::scientific << std::setprecision(3)
       << worst << std::defaultfloat << std::setw(10) << entries << std::setw(8) << cfg.gradcheck_seeds << "  "
       << (ok ? "ok" : "FAIL") << "\n";
    kv << op << ".max_rel_err=" << full(worst) << "\n";
  }
  os << "\n[gradcheck_report]\n" << "tol=" << full(cfg.gradcheck_tol) << "\neps=" << full(cfg.gradcheck_eps) << "\n"
     << kv.str() << "pass=" << (breach ? "false" : "true") << "\n";
  write_text(ctx.out / "gradcheck_report.txt", os.str());
  ctx.log << os.str();
  return breach ? kExitGradcheck : kExitOk;
}

void dump_checkpoint(const std::string& path, std::ostream& os) {
  const Checkpoint ck = load_checkpoint(path);
  os << "kind=" << (ck.kind == CheckpointKind::kMaskNet ? "mask" : "am") << "\nseed=" << ck.seed
     << "\nfrozen=" << (ck.store.frozen() ? "true" : "false") << "\ndigest=" << ck.store.digest() << "\n[config]\n"
     << ck.config_text << (ck.config_text.ends_with('\n') ? "" : "\n") << "[tensors]\n";
  for (int i = 0; i < ck.store.size(); ++i) {
    const auto& e = ck.store.entry(i);
    os << e.name << " " << e.value.rows() << "x" << e.value.cols() << (e.trainable ? "" : " const")
       << " norm=" << full(e.value.norm()) << "\n";
  }
}

void dump_wav(const std::string& path, std::ostream& os) {
  const WavData w = read_wav(path);
  os << "sample_rate=" << w.sample_rate << "\nchannels=" << w.samples.rows() << "\nsamples=" << w.samples.cols()
     << "\n";
  for (Eigen::Index c = 0; c < w.samples.rows(); ++c) {
    const double rms = w.samples.cols() ? std::sqrt(w.samples.row(c).squaredNorm() / w.samples.cols()) : 0.0;
    os << "rms." << c << "=" << full(rms) << "\n";
  }
}

void dump_matrix(const std::string& path, bool values, std::ostream& os) {
  const MatrixDump d = read_matrix(path);
  const bool complex = d.dtype == MatrixDtype::kComplex128;
  os << "rows=" << d.data.rows() << "\ncols=" << d.data.cols() << "\ndtype=" << (complex ? "complex128" : "float64")
     << "\nmax_abs=" << full(d.data.size() ? d.data.cwiseAbs().maxCoeff() : 0.0) << "\n";
  if (!values) return;
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < d.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.data.cols(); ++c) {
      if (c) os << " ";
      os << d.data(r, c).real();
      if (complex) os << (d.data(r, c).imag() < 0 ? "-" : "+") << std::abs(d.data(r, c).imag()) << "i";
    }
    os << "\n";
  }
}

int cmd_dump(const std::string& path, bool values, std::ostream& os) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot open " + path);
  char magic[8] = {};
  f.read(magic, sizeof magic);
  os << "file=" << path << "\n";
  if (f.gcount() == 8 && std::memcmp(magic, "GEVBFCK", 8) == 0) {
    os << "format=checkpoint\n";
    dump_checkpoint(path, os);
  } else if (f.gcount() >= 4 && std::memcmp(magic, "RIFF", 4) == 0) {
    os << "format=wav\n";
    dump_wav(path, os);
  } else {
    os << "format=matrix\n";
    dump_matrix(path, values, os);
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable mask-based GEV beamforming: simulation, training, adaptation"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "INI config file");
  app.add_option("--set", common.overrides, "section.key=value override (repeatable)");
  app.add_option("--out", common.out_dir, "output directory");
  app.add_option("--seed", common.seed, "root seed (overrides run.seed)");
  app.fallthrough();

  std::string dump_path;
  bool dump_values = false;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Context&);
  };
  const Sub subs[] = {
      {"simulate", "write simulated multichannel scenes with oracle dumps", cmd_simulate},
      {"pretrain", "train mask estimator and acoustic model, write checkpoints", cmd_pretrain},
      {"beamform", "enhance a multichannel WAV (paths.input)", cmd_beamform},
      {"adapt", "two-pass adaptation of the mask estimator", cmd_adapt},
      {"eval", "evaluate learned and ideal masks on simulated scenes", cmd_eval},
      {"gradcheck", "finite-difference check of every differentiable op", cmd_gradcheck},
  };
  for (const Sub& s : subs) app.add_subcommand(s.name, s.help);
  CLI::App* dump = app.add_subcommand("dump", "describe a checkpoint, WAV or matrix dump");
  dump->add_option("file", dump_path, "file to describe")->required();
  dump->add_flag("--values", dump_values, "print every matrix entry");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitParse;
  }

  try {
    if (dump->parsed()) return cmd_dump(dump_path, dump_values, out);
    for (const Sub& s : subs)
      if (app.got_subcommand(s.name)) return s.run(open_context(common, out));
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitParse;
}

}  // namespace gevbf
