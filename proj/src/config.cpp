#include "gevbf/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gevbf/error.hpp"
#include "gevbf/gradcheck.hpp"
#include "gevbf/random.hpp"

namespace gevbf {

const char* to_string(BeamformerKind kind) { return kind == BeamformerKind::kMvdr ? "mvdr" : "gev_ban"; }

BeamformerKind parse_beamformer_kind(const std::string& text) {
  if (text == "gev_ban") return BeamformerKind::kGevBan;
  if (text == "mvdr") return BeamformerKind::kMvdr;
  fail(ErrorKind::kInvalidConfig, "unknown beamformer " + text);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  fail(ErrorKind::kParse, key + ": cannot read '" + value + "' as " + what);
}

template <class T>
T parse_int(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  T out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) bad_value(key, value, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, value, "a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const std::string& item : split_list(value)) out.push_back(parse_int<int>(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
  return os.str();
}

// shortest text that parses back to the same double
std::string real_text(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Enum parsers report invalid-config; inside a config file a misspelt enum is
// a bad value, which the contract treats as a parse failure.
template <class F>
auto parse_enum(const std::string& key, const std::string& value, F&& f) {
  try {
    return f(trim(value));
  } catch (const Error&) {
    bad_value(key, value, "a known option");
  }
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(name, member)                                                           \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_int<decltype(c.member)>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define REAL_FIELD(name, member)                                                                    \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_real(name, v); }, \
        [](const RunConfig& c) { return real_text(c.member); }}
#define BOOL_FIELD(name, member)                                                                    \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define STRING_FIELD(name, member)                                                             \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = trim(v); }, \
        [](const RunConfig& c) { return c.member; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      INT_FIELD("run.seed", seed),

      INT_FIELD("stft.sample_rate", scene.stft.sample_rate),
      INT_FIELD("stft.win_len", scene.stft.win_len),
      INT_FIELD("stft.hop", scene.stft.hop),
      INT_FIELD("stft.dft_size", scene.stft.dft_size),

      INT_FIELD("scene.channels", scene.channels),
      REAL_FIELD("scene.duration_s", scene.duration_s),
      REAL_FIELD("scene.snr_db", scene.snr_db),
      Field{"scene.speaker",
            [](RunConfig& c, const std::string& v) {
              c.scene.speaker = parse_enum("scene.speaker", v, [](const std::string& s) { return speaker_preset(s); });
            },
            [](const RunConfig& c) { return c.scene.speaker.name; }},
      Field{"scene.noise",
            [](RunConfig& c, const std::string& v) {
              c.scene.noise = parse_enum("scene.noise", v, [](const std::string& s) { return parse_noise_kind(s); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.scene.noise)); }},
      Field{"scene.point_noise",
            [](RunConfig& c, const std::string& v) {
              c.scene.point_noise =
                  parse_enum("scene.point_noise", v, [](const std::string& s) { return parse_noise_color(s); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.scene.point_noise)); }},
      INT_FIELD("scene.n_classes", scene.n_classes),
      INT_FIELD("scene.reference_channel", scene.reference_channel),
      REAL_FIELD("scene.max_delay", scene.max_delay),
      REAL_FIELD("scene.sensor_noise_db", scene.sensor_noise_db),
      INT_FIELD("scene.min_segment", scene.min_segment),
      INT_FIELD("scene.max_segment", scene.max_segment),
      REAL_FIELD("scene.silence_prob", scene.silence_prob),
      REAL_FIELD("scene.speech_rms", scene.speech_rms),
      INT_FIELD("scene.count", scene_count),

      Field{"mask.hidden_dims",
            [](RunConfig& c, const std::string& v) { c.pretrain.mask_cfg.hidden_dims = parse_int_list("mask.hidden_dims", v); },
            [](const RunConfig& c) { return join(c.pretrain.mask_cfg.hidden_dims); }},
      BOOL_FIELD("mask.recurrent_first_layer", pretrain.mask_cfg.recurrent_first_layer),

      INT_FIELD("am.context", pretrain.am_cfg.context),
      Field{"am.hidden_dims",
            [](RunConfig& c, const std::string& v) { c.pretrain.am_cfg.hidden_dims = parse_int_list("am.hidden_dims", v); },
            [](const RunConfig& c) { return join(c.pretrain.am_cfg.hidden_dims); }},
      INT_FIELD("am.n_mels", pretrain.n_mels),

      Field{"pretrain.speakers",
            [](RunConfig& c, const std::string& v) { c.pretrain.speakers = split_list(v); },
            [](const RunConfig& c) { return join(c.pretrain.speakers); }},
      INT_FIELD("pretrain.scenes_per_speaker", pretrain.scenes_per_speaker),
      REAL_FIELD("pretrain.snr_low", pretrain.snr_low),
      REAL_FIELD("pretrain.snr_high", pretrain.snr_high),
      INT_FIELD("pretrain.mask_epochs", pretrain.mask_train.epochs),
      REAL_FIELD("pretrain.mask_lr", pretrain.mask_train.lr),
      INT_FIELD("pretrain.mask_batch", pretrain.mask_train.batch),
      INT_FIELD("pretrain.am_epochs", pretrain.am_train.epochs),
      REAL_FIELD("pretrain.am_lr", pretrain.am_train.lr),
      INT_FIELD("pretrain.am_batch", pretrain.am_train.batch),
      INT_FIELD("pretrain.am_channels", pretrain.am_channels),

      Field{"beamform.kind",
            [](RunConfig& c, const std::string& v) {
              c.beamformer = parse_enum("beamform.kind", v, [](const std::string& s) { return parse_beamformer_kind(s); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.beamformer)); }},
      INT_FIELD("beamform.k_iters", k_iters),
      REAL_FIELD("beamform.loading", loading),
      BOOL_FIELD("beamform.dump_masks", dump_masks),

      REAL_FIELD("adapt.lr", adapt.lr),
      INT_FIELD("adapt.epochs", adapt.epochs),
      Field{"adapt.target_mode",
            [](RunConfig& c, const std::string& v) {
              c.adapt.target_mode =
                  parse_enum("adapt.target_mode", v, [](const std::string& s) { return parse_target_mode(s); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.adapt.target_mode)); }},
      STRING_FIELD("adapt.speaker", adapt_speaker),
      INT_FIELD("adapt.utterances", adapt_utterances),
      INT_FIELD("adapt.held_out", adapt_held_out),

      STRING_FIELD("eval.speaker", eval_speaker),
      INT_FIELD("eval.scenes", eval_scenes),

      INT_FIELD("gradcheck.seeds", gradcheck_seeds),
      REAL_FIELD("gradcheck.eps", gradcheck_eps),
      REAL_FIELD("gradcheck.tol", gradcheck_tol),
      Field{"gradcheck.ops", [](RunConfig& c, const std::string& v) { c.gradcheck_ops = split_list(v); },
            [](const RunConfig& c) { return join(c.gradcheck_ops); }},

      STRING_FIELD("paths.mask_ckpt", mask_ckpt),
      STRING_FIELD("paths.am_ckpt", am_ckpt),
      STRING_FIELD("paths.input", input),
  };
  return table;
}

#undef INT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields())
    if (f.key == key) return f.set(cfg, value);
  fail(ErrorKind::kInvalidConfig, "unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    const std::string sec = f.key.substr(0, f.key.find('.'));
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    os << f.key.substr(sec.size() + 1) << " = " << f.get(*this) << "\n";
  }
  return os.str();
}

void RunConfig::sync() {
  pretrain.scene = scene;
  pretrain.k_iters = k_iters;
  pretrain.loading = loading;
  pretrain.seed = derive_seed(seed, "pretrain");
  pretrain.mask_cfg.input_dim = scene.stft.num_bins();
  pretrain.mask_cfg.seed = derive_seed(seed, "mask-init");
  pretrain.mask_train.seed = derive_seed(seed, "mask-train");
  pretrain.am_cfg.n_features = pretrain.n_mels;
  pretrain.am_cfg.n_states = scene.n_classes;
  pretrain.am_cfg.seed = derive_seed(seed, "am-init");
  pretrain.am_train.seed = derive_seed(seed, "am-train");
  adapt.k_iters = k_iters;
  adapt.loading = loading;
}

void RunConfig::validate() const {
  scene.validate();
  pretrain.mask_cfg.validate();
  require(scene_count >= 1, ErrorKind::kInvalidConfig, "scene.count must be >= 1");
  require(k_iters >= 1, ErrorKind::kInvalidConfig, "beamform.k_iters must be >= 1");
  require(loading >= 0.0, ErrorKind::kInvalidConfig, "beamform.loading must be >= 0");
  pretrain.am_cfg.validate();
  require(!pretrain.speakers.empty() && pretrain.scenes_per_speaker >= 1, ErrorKind::kInvalidConfig,
          "pretraining needs at least one speaker and scene");
  for (const std::string& s : pretrain.speakers) speaker_preset(s);
  require(pretrain.snr_low <= pretrain.snr_high, ErrorKind::kInvalidConfig, "pretrain.snr_low > snr_high");
  require(pretrain.mask_train.epochs >= 0 && pretrain.am_train.epochs >= 0, ErrorKind::kInvalidConfig,
          "pretraining epochs must be >= 0");
  require(pretrain.mask_train.batch >= 1 && pretrain.am_train.batch >= 1, ErrorKind::kInvalidConfig,
          "pretraining batch must be >= 1");
  require(pretrain.mask_train.lr >= 0.0 && pretrain.am_train.lr >= 0.0, ErrorKind::kInvalidConfig,
          "pretraining lr must be >= 0");
  require(pretrain.am_channels >= 1, ErrorKind::kInvalidConfig, "pretrain.am_channels must be >= 1");
  adapt.validate();
  speaker_preset(adapt_speaker);
  speaker_preset(eval_speaker);
  require(adapt_utterances >= 1 && adapt_held_out >= 0, ErrorKind::kInvalidConfig, "adapt utterance counts");
  require(eval_scenes >= 1, ErrorKind::kInvalidConfig, "eval.scenes must be >= 1");
  require(gradcheck_seeds >= 1, ErrorKind::kInvalidConfig, "gradcheck.seeds must be >= 1");
  require(gradcheck_eps > 0.0, ErrorKind::kInvalidConfig, "gradcheck.eps must be > 0");
  require(gradcheck_tol > 0.0, ErrorKind::kInvalidConfig, "gradcheck.tol must be > 0");
  for (const std::string& op : gradcheck_ops) {
    bool known = false;
    for (const std::string& k : gevbf::gradcheck_ops()) known |= (k == op);
    require(known, ErrorKind::kInvalidConfig, "unknown gradcheck op '" + op + "'");
  }
}

RunConfig parse_run_config(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kParse, std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      fail(ErrorKind::kInvalidConfig, "unknown config key '" + section + "' outside any section");
    bool known = false;
    for (const Field& f : fields()) known |= f.key.starts_with(section + ".");
    require(known, ErrorKind::kInvalidConfig, "unknown config section '" + section + "'");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
  return cfg;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_override) {
  RunConfig cfg;
  if (file) {
    std::ifstream in(*file);
    require(static_cast<bool>(in), ErrorKind::kIo, "cannot open config " + file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_run_config(ss.str());
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kParse, "--set expects section.key=value, got '" + o + "'");
    set_config_value(cfg, trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  if (seed_override) cfg.seed = *seed_override;
  cfg.sync();
  cfg.validate();
  return cfg;
}

}  // namespace gevbf
