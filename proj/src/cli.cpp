#include "vsdepth/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "vsdepth/config.hpp"
#include "vsdepth/error.hpp"
#include "vsdepth/evaluation.hpp"
#include "vsdepth/scalecal.hpp"
#include "vsdepth/toyworld.hpp"
#include "vsdepth/trainer.hpp"

namespace vsdepth {

namespace fs = std::filesystem;

namespace {

struct Options {
  // synth-data
  std::string out;
  int scenes = 4, frames = 60, width = 128, height = 96;
  uint64_t seed = 1;
  double domain_gap = 1.0;
  // shared
  std::string config, profile;
  // train
  std::string resume, psi_file;
  std::optional<uint64_t> train_seed;
  std::optional<int64_t> steps;
  // evaluate / inspect
  std::string ckpt, data, mode = "relative", bins, report, sequences = "held-out";
  bool per_class = false;
};

RunConfig resolve_config(const Options& o) {
  fs::path file;
  if (!o.config.empty()) {
    file = o.config;
  } else if (auto env = config_path_from_env()) {
    file = *env;
  } else {
    throw ConfigError(std::string("no config given: pass --config or set ") + kConfigEnvVar, "config");
  }
  std::optional<std::string> profile;
  if (!o.profile.empty()) profile = o.profile;
  return load_config(file, profile);
}

LoadOptions load_options(const RunConfig& c) { return {c.model.width, c.model.height, c.train.d_max}; }

std::pair<Dataset, Dataset> split(const Dataset& ds, int held_out) {
  if (held_out <= 0) return {ds, Dataset(ds.domain(), ds.legend())};
  return ds.split_last(static_cast<size_t>(held_out));
}

std::vector<double> parse_edges(const std::string& text) {
  std::vector<double> edges;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      edges.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad bin edge '" + item + "'", "bins");
    }
  }
  return edges;
}

struct LoadedModel {
  RunConfig config;
  Models models;
  Checkpoint meta;
};

LoadedModel load_model(const fs::path& ckpt) {
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt.string(), ckpt.string());
  LoadedModel m;
  const auto meta = read_checkpoint_meta(ckpt);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta.config_json);
  } catch (const nlohmann::json::exception&) {
    throw InvalidInput("checkpoint " + ckpt.string() + " carries no readable config");
  }
  m.config = config_from_json(j);
  m.models = Models::create(m.config.model, m.config.train.seed);
  m.meta = load_checkpoint(ckpt, m.models, nullptr);
  m.models.train(false);
  return m;
}

int cmd_synth(const Options& o, std::ostream& out) {
  SceneSpec spec;
  spec.scenes = o.scenes;
  spec.frames = o.frames;
  spec.width = o.width;
  spec.height = o.height;
  spec.seed = o.seed;
  spec.domain_gap = o.domain_gap;
  const auto world = generate_toy_world(spec);
  write_toy_world(world, o.out);
  out << "wrote " << o.scenes << " sequences x " << o.frames << " frames per domain to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig c = resolve_config(o);
  if (o.train_seed) c.train.seed = *o.train_seed;
  if (o.steps) c.train.steps = *o.steps;
  c.validate();

  const auto lo = load_options(c);
  const auto [real, real_held] = split(load_dataset(c.data_root, Domain::kReal, lo), c.held_out_sequences);
  const auto [virt, virt_held] = split(load_dataset(c.data_root, Domain::kVirtual, lo), c.held_out_sequences);

  const fs::path out_dir = c.output_dir;
  fs::create_directories(out_dir);
  save_config(out_dir / "config.json", c);

  TrainOptions opts;
  opts.out_dir = out_dir;
  if (!o.resume.empty()) opts.resume = fs::path(o.resume);
  fs::path psi_file = o.psi_file.empty() ? out_dir / "psi.txt" : fs::path(o.psi_file);
  if (fs::exists(psi_file)) opts.psi = read_psi(psi_file);
  else if (!o.psi_file.empty()) throw ConfigError("psi file not found: " + psi_file.string(), psi_file.string());
  opts.config_json = to_json(c).dump();
  const int64_t every = std::max<int64_t>(1, c.train.steps / 20);
  opts.on_step = [&](const LossBundle& b) {
    if ((b.step + 1) % every == 0 || b.step + 1 == c.train.steps)
      out << "step " << b.step + 1 << "/" << c.train.steps << "  l_sp " << b.l_sp << "  l_sf " << b.l_sf
          << "  beta_sf " << b.beta_sf << "  da_acc " << b.da_accuracy << std::endl;
  };
  const auto res = train(real, virt, c.model, c.train, opts);
  out << "checkpoint " << res.checkpoint.string() << '\n';
  return kExitOk;
}

int cmd_calibrate(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const auto [virt, held] = split(load_dataset(c.data_root, Domain::kVirtual, load_options(c)), c.held_out_sequences);
  const auto s = calibrate_global_scale(virt, c.model, c.train, c.calibration);
  write_psi(o.out, s.psi);
  out << "psi " << s.psi << "  (GT median " << s.gt_median << " m, self-supervised median " << s.pred_median
      << ")\nwrote " << o.out << '\n';
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  auto m = load_model(o.ckpt);
  const auto mode = scaling_mode_from_string(o.mode);
  std::optional<double> psi;
  if (!o.psi_file.empty()) psi = read_psi(o.psi_file);
  else psi = m.meta.psi;
  if (mode == ScalingMode::kAbsolute && !psi)
    throw ConfigError("absolute mode needs --psi-file or a checkpoint with psi", "psi-file");

  EvalConfig ec = m.config.evaluation;
  if (!o.bins.empty()) ec.bin_edges = parse_edges(o.bins);
  if (o.per_class) ec.per_class = true;
  ec.validate();

  LoadOptions lo{0, 0, m.config.train.d_max};
  auto ds = load_dataset(o.data, Domain::kVirtual, lo);
  if (o.sequences == "held-out") ds = split(ds, m.config.held_out_sequences).second;
  else if (o.sequences != "all") throw ConfigError("--sequences must be 'held-out' or 'all'", "sequences");
  if (ds.empty()) throw InvalidInput("no evaluation triplets in " + o.data);

  const auto rep = evaluate_report(network_predictor(m.models.depth, m.config.model), ds, mode, psi, ec);
  const std::string table = format_table(rep);
  out << table;

  fs::path text = o.report, machine = o.report;
  if (fs::path(o.report).extension() == ".json") text.replace_extension(".txt");
  else machine += ".json";
  if (text.has_parent_path()) fs::create_directories(text.parent_path());
  std::ofstream(text) << table;
  auto j = to_json(rep);
  j["checkpoint"] = o.ckpt;
  j["data"] = o.data;
  j["sequences"] = o.sequences;
  j["config"] = to_json(m.config);
  std::ofstream(machine) << j.dump(2) << '\n';
  out << "wrote " << text.string() << " and " << machine.string() << '\n';
  return kExitOk;
}

void print_group(std::ostream& out, const std::string& name, const torch::nn::Module& module) {
  int64_t total = 0;
  std::ostringstream rows;
  for (const auto& p : module.named_parameters()) {
    rows << "    " << p.key() << " " << p.value().sizes() << '\n';
    total += p.value().numel();
  }
  out << name << " (" << total << " weights)\n" << rows.str();
}

int cmd_inspect(const Options& o, std::ostream& out) {
  auto m = load_model(o.ckpt);
  out << "checkpoint " << o.ckpt << "\nstep " << m.meta.step << "\npsi ";
  if (m.meta.psi) out << *m.meta.psi << '\n';
  else out << "none\n";
  print_group(out, "encoder", *m.models.depth->encoder());
  print_group(out, "pyramid", *m.models.depth->pyramid());
  print_group(out, "decoder", *m.models.depth->decoder());
  print_group(out, "pose", *m.models.pose);
  print_group(out, "domain classifier", *m.models.classifier);
  out << "config\n" << to_json(m.config).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depth from mixed real and virtual video", "vsdepth"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth-data", "render the toy world in the dataset layout");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--scenes", o.scenes, "sequences per domain")->check(CLI::PositiveNumber);
  synth->add_option("--frames", o.frames, "frames per sequence")->check(CLI::PositiveNumber);
  synth->add_option("--seed", o.seed, "generator seed");
  synth->add_option("--width", o.width, "image width")->check(CLI::PositiveNumber);
  synth->add_option("--height", o.height, "image height")->check(CLI::PositiveNumber);
  synth->add_option("--domain-gap", o.domain_gap, "appearance gap between domains (0 = none)");

  const std::string config_help = std::string("run config (JSON); default from $") + kConfigEnvVar;
  auto* tr = app.add_subcommand("train", "train depth, pose and domain networks");
  tr->add_option("--config", o.config, config_help);
  tr->add_option("--profile", o.profile, "base profile: full or desk");
  tr->add_option("--resume", o.resume, "checkpoint to continue from");
  tr->add_option("--seed", o.train_seed, "override train.seed");
  tr->add_option("--steps", o.steps, "override train.steps");
  tr->add_option("--psi-file", o.psi_file, "psi to embed in checkpoints (default <output_dir>/psi.txt)");

  auto* cal = app.add_subcommand("calibrate", "estimate the global scale factor psi on virtual data");
  cal->add_option("--config", o.config, config_help);
  cal->add_option("--profile", o.profile, "base profile: full or desk");
  cal->add_option("--out", o.out, "psi output file")->required();

  auto* ev = app.add_subcommand("evaluate", "depth metrics on a dataset with GT");
  ev->add_option("--ckpt", o.ckpt, "checkpoint")->required();
  ev->add_option("--data", o.data, "dataset root")->required();
  ev->add_option("--mode", o.mode, "relative or absolute")->check(CLI::IsMember({"relative", "absolute"}));
  ev->add_option("--psi-file", o.psi_file, "psi for absolute mode (default: embedded in the checkpoint)");
  ev->add_option("--bins", o.bins, "comma-separated GT depth bin edges in meters");
  ev->add_flag("--per-class", o.per_class, "abs-rel per semantic class");
  ev->add_option("--sequences", o.sequences, "held-out or all")->check(CLI::IsMember({"held-out", "all"}));
  ev->add_option("--report", o.report, "report path (table; JSON alongside)")->required();

  auto* in = app.add_subcommand("inspect", "print checkpoint contents");
  in->add_option("--ckpt", o.ckpt, "checkpoint")->required();

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    const auto subs = app.get_subcommands({});
    const bool known = std::any_of(subs.begin(), subs.end(), [&](const CLI::App* s) { return s->get_name() == args[0]; });
    if (!known) {
      err << "error: unknown subcommand '" << args[0] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (cal->parsed()) return cmd_calibrate(o, out);
    if (ev->parsed()) return cmd_evaluate(o, out);
    if (in->parsed()) return cmd_inspect(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace vsdepth
