#include "vsdepth/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "vsdepth/error.hpp"

namespace vsdepth {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

RunConfig RunConfig::for_profile(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "full") {
    c.model.width = 640;
    c.model.height = 192;
    c.model.backbone = "residual";
    c.model.encoder_widths = {64, 64, 128, 256, 512};
    c.model.pyramid_widths = {64, 64, 128, 256, 512};
    c.model.decoder_widths = {16, 32, 64, 128, 256};
    c.model.classifier_hidden = 256;
    c.train.batch_size = 16;
    c.train.steps = 20000;
    c.calibration.steps = 3000;
    c.calibration.batch_size = 16;
    c.evaluation.cap = 80.0;
  } else if (name == "desk") {
    c.model.width = 128;
    c.model.height = 96;
    c.model.backbone = "conv";
    c.model.encoder_widths = {16, 32, 64, 128, 256};
    c.model.pyramid_widths = {16, 32, 64, 128, 256};
    c.model.decoder_widths = {16, 32, 64, 128, 256};
    c.model.classifier_hidden = 64;
    c.train.batch_size = 8;
    c.train.steps = 1500;
    c.calibration.steps = 300;
    c.calibration.batch_size = 8;
  } else {
    throw ConfigError("unknown profile '" + name + "'", "profile");
  }
  return c;
}

std::vector<std::string> profile_names() { return {"full", "desk"}; }

void RunConfig::validate() const {
  auto scoped = [](const char* section, auto&& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(section) + ": " + e.what(), std::string(section) + "." + e.key());
    }
  };
  if (data_root.empty()) throw ConfigError("data_root must not be empty", "data_root");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty", "output_dir");
  if (held_out_sequences < 0) throw ConfigError("held_out_sequences must be non-negative", "held_out_sequences");
  scoped("model", [&] { model.validate(); });
  scoped("train", [&] { train.validate(); });
  scoped("calibration", [&] { calibration.validate(); });
  scoped("evaluation", [&] { evaluation.validate(); });
}

namespace {

ojson widths_json(const Widths& w) { return ojson(std::vector<int64_t>(w.begin(), w.end())); }

// Reads keys from one JSON object, remembering which were used so the rest
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be an object", path_);
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for " + where(key), where(key));
    }
  }

  void read(const char* key, Widths& out) {
    std::vector<int64_t> v;
    read(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != out.size()) throw ConfigError(where(key) + " needs 5 entries", where(key));
    std::copy(v.begin(), v.end(), out.begin());
  }

  std::optional<Section> child(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  bool is_null(const char* key) const { return j_.contains(key) && j_.at(key).is_null(); }
  void mark(const char* key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + where(k), where(k));
  }

 private:
  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ojson to_json(const RunConfig& c) {
  ojson j;
  j["profile"] = c.profile;
  j["data_root"] = c.data_root;
  j["output_dir"] = c.output_dir;
  j["held_out_sequences"] = c.held_out_sequences;

  const auto& m = c.model;
  j["model"] = {{"width", m.width},
                {"height", m.height},
                {"backbone", m.backbone},
                {"encoder_widths", widths_json(m.encoder_widths)},
                {"pyramid_widths", widths_json(m.pyramid_widths)},
                {"decoder_widths", widths_json(m.decoder_widths)},
                {"classifier_hidden", m.classifier_hidden},
                {"min_depth", m.min_depth},
                {"max_depth", m.max_depth}};

  const auto& t = c.train;
  const auto& a = t.augment;
  ojson weights = ojson::object();
  for (const auto& [k, v] : t.class_weights) weights[k] = v;
  j["train"] = {{"lr", t.lr},
                {"batch_size", t.batch_size},
                {"real_fraction", t.real_fraction},
                {"smoothness_weight", t.smoothness_weight},
                {"beta_da", t.beta_da},
                {"reversal_scale", t.reversal_scale},
                {"d_max", t.d_max},
                {"steps", t.steps},
                {"seed", t.seed},
                {"log_every", t.log_every},
                {"checkpoint_every", t.checkpoint_every},
                {"augment",
                 {{"jitter_probability", a.jitter_probability},
                  {"brightness", a.brightness},
                  {"contrast", a.contrast},
                  {"saturation", a.saturation},
                  {"hue", a.hue},
                  {"flip_probability", a.flip_probability}}},
                {"class_weights", weights}};

  const auto& k = c.calibration;
  j["calibration"] = {
      {"steps", k.steps}, {"batch_size", k.batch_size}, {"seed", k.seed}, {"max_images", k.max_images}};

  const auto& e = c.evaluation;
  j["evaluation"] = {{"cap", e.cap},
                     {"min_depth", e.min_depth},
                     {"bin_edges", e.bin_edges},
                     {"per_class", e.per_class},
                     {"crop", e.crop ? ojson{{"top", e.crop->top},
                                             {"bottom", e.crop->bottom},
                                             {"left", e.crop->left},
                                             {"right", e.crop->right}}
                                     : ojson(nullptr)}};
  return j;
}

RunConfig config_from_json(const json& j, const std::optional<std::string>& profile_override) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::string profile = "full";
  if (j.contains("profile")) {
    if (!j.at("profile").is_string()) throw ConfigError("bad value for profile", "profile");
    profile = j.at("profile").get<std::string>();
  }
  if (profile_override) profile = *profile_override;
  RunConfig c = RunConfig::for_profile(profile);

  Section root(j, "");
  root.mark("profile");
  root.read("data_root", c.data_root);
  root.read("output_dir", c.output_dir);
  root.read("held_out_sequences", c.held_out_sequences);

  if (auto s = root.child("model")) {
    auto& m = c.model;
    s->read("width", m.width);
    s->read("height", m.height);
    s->read("backbone", m.backbone);
    s->read("encoder_widths", m.encoder_widths);
    s->read("pyramid_widths", m.pyramid_widths);
    s->read("decoder_widths", m.decoder_widths);
    s->read("classifier_hidden", m.classifier_hidden);
    s->read("min_depth", m.min_depth);
    s->read("max_depth", m.max_depth);
    s->finish();
  }
  if (auto s = root.child("train")) {
    auto& t = c.train;
    s->read("lr", t.lr);
    s->read("batch_size", t.batch_size);
    s->read("real_fraction", t.real_fraction);
    s->read("smoothness_weight", t.smoothness_weight);
    s->read("beta_da", t.beta_da);
    s->read("reversal_scale", t.reversal_scale);
    s->read("d_max", t.d_max);
    s->read("steps", t.steps);
    s->read("seed", t.seed);
    s->read("log_every", t.log_every);
    s->read("checkpoint_every", t.checkpoint_every);
    if (auto a = s->child("augment")) {
      auto& g = t.augment;
      a->read("jitter_probability", g.jitter_probability);
      a->read("brightness", g.brightness);
      a->read("contrast", g.contrast);
      a->read("saturation", g.saturation);
      a->read("hue", g.hue);
      a->read("flip_probability", g.flip_probability);
      a->finish();
    }
    s->read("class_weights", t.class_weights);
    s->finish();
  }
  if (auto s = root.child("calibration")) {
    s->read("steps", c.calibration.steps);
    s->read("batch_size", c.calibration.batch_size);
    s->read("seed", c.calibration.seed);
    s->read("max_images", c.calibration.max_images);
    s->finish();
  }
  if (auto s = root.child("evaluation")) {
    auto& e = c.evaluation;
    s->read("cap", e.cap);
    s->read("min_depth", e.min_depth);
    s->read("bin_edges", e.bin_edges);
    s->read("per_class", e.per_class);
    if (s->is_null("crop")) {
      s->mark("crop");
      e.crop.reset();
    } else if (auto r = s->child("crop")) {
      Crop crop;
      r->read("top", crop.top);
      r->read("bottom", crop.bottom);
      r->read("left", crop.left);
      r->read("right", crop.right);
      r->finish();
      e.crop = crop;
    }
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& file, const std::optional<std::string>& profile_override) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config file not found: " + file.string(), file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + file.string() + ": " + e.what(), file.string());
  }
  return config_from_json(j, profile_override);
}

void save_config(const fs::path& file, const RunConfig& c) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string(), file.string());
  out << to_json(c).dump(2) << '\n';
}

std::optional<fs::path> config_path_from_env() {
  const char* v = std::getenv(kConfigEnvVar);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

}  // namespace vsdepth
