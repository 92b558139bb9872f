#include "aimdit/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "aimdit/checkpoint.hpp"
#include "aimdit/config.hpp"
#include "aimdit/data.hpp"
#include "aimdit/error.hpp"
#include "aimdit/gradcheck.hpp"
#include "aimdit/train.hpp"
#include "binary_io.hpp"

namespace aimdit {

namespace {

namespace fs = std::filesystem;

void print_metrics_table(std::ostream& out, const MetricsReport& m, const std::vector<std::string>& label_map) {
  out << std::left << std::setw(12) << "class" << std::right << std::setw(10) << "support" << std::setw(11)
      << "precision" << std::setw(10) << "recall" << std::setw(10) << "f1" << "\n";
  for (std::size_t c = 0; c < m.classes; ++c) {
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < m.classes; ++t) predicted += m.confusion[t][c];
    if (m.support[c] == 0 && predicted == 0) continue;
    const std::string name = c < label_map.size() ? label_map[c] : "class" + std::to_string(c);
    out << std::left << std::setw(12) << name << std::right << std::setw(10) << m.support[c] << std::fixed
        << std::setprecision(4) << std::setw(11) << m.precision[c] << std::setw(10) << m.recall[c] << std::setw(10)
        << m.per_class_f1[c] << std::defaultfloat << "\n";
  }
  std::ostringstream acc_label;
  acc_label << "acc-" << m.classes;
  out << std::fixed << std::setprecision(4) << std::left << std::setw(12) << acc_label.str() << std::right
      << std::setw(10) << m.accuracy << "\n"
      << std::left << std::setw(12) << "w-f1" << std::right << std::setw(10) << m.weighted_f1 << "\n"
      << std::defaultfloat;
}

std::vector<std::size_t> parse_scales(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "kernel scales must be a comma list of positive integers, got '" + text + "'");
    }
  }
  return out;
}

LengthRange parse_range(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const auto v = static_cast<std::size_t>(std::stoul(text));
      return {v, v};
    }
    return {static_cast<std::size_t>(std::stoul(text.substr(0, colon))),
            static_cast<std::size_t>(std::stoul(text.substr(colon + 1)))};
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, "length range must look like MIN:MAX, got '" + text + "'");
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("AIMDIT_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, std::string("AIMDIT_SEED is not an unsigned integer: '") + s + "'");
  }
}

// Flags mirroring RunConfig; unset flags leave the config-file value alone.
struct RunFlags {
  std::string config_file;
  std::optional<std::size_t> d, d_h, heads, d_ff, man_layers, min_layers, classes, batch_size, epochs;
  std::optional<std::string> kernel_scales, modalities, precision, dataset, checkpoint, report;
  std::optional<double> lr, beta1, beta2, epsilon;
  std::optional<std::uint64_t> seed;
  bool no_man = false;
  bool no_min = false;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_file, "JSON run config; flags override it");
    app.add_option("--d", d, "shared feature width");
    app.add_option("--d-h", d_h, "classifier hidden width (default 2d)");
    app.add_option("--heads", heads, "attention heads");
    app.add_option("--d-ff", d_ff, "feed-forward inner width (default 4d)");
    app.add_option("--man-layers", man_layers, "MABlocks per MAN");
    app.add_option("--min-layers", min_layers, "transformer layers per CMT/SMT stack");
    app.add_option("--kernel-scales", kernel_scales, "odd inception kernel sides, e.g. 1,3,5");
    app.add_option("--classes", classes, "number of emotion classes");
    app.add_option("--modalities", modalities, "enabled modalities, subset of tav");
    app.add_flag("--no-man", no_man, "bypass the augmentation network");
    app.add_flag("--no-min", no_min, "replace the interaction network by concatenation of intra-modal features");
    app.add_option("--lr", lr, "learning rate");
    app.add_option("--beta1", beta1);
    app.add_option("--beta2", beta2);
    app.add_option("--epsilon", epsilon);
    app.add_option("--batch-size", batch_size);
    app.add_option("--epochs", epochs);
    app.add_option("--seed", seed, "RNG seed (falls back to $AIMDIT_SEED)");
    app.add_option("--precision", precision, "float32 or float64");
    app.add_option("--dataset", dataset, "dataset manifest (.json)");
    app.add_option("--checkpoint", checkpoint, "checkpoint output path");
    app.add_option("--report", report, "JSON report output path");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_file.empty()) {
      try {
        c = RunConfig::from_json(nlohmann::json::parse(io::read_text(config_file)));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, "config file " + config_file + " is not valid JSON: " + e.what());
      }
    }
    if (d) c.model.d = *d;
    if (d_h) c.model.d_h = *d_h;
    if (heads) c.model.heads = *heads;
    if (d_ff) c.model.d_ff = *d_ff;
    if (man_layers) c.model.man_layers = *man_layers;
    if (min_layers) c.model.min_layers = *min_layers;
    if (classes) c.model.classes = *classes;
    if (kernel_scales) c.model.kernel_scales = parse_scales(*kernel_scales);
    if (modalities) c.model.modalities = *modalities;
    if (no_man) c.model.use_man = false;
    if (no_min) c.model.use_min = false;
    if (lr) c.optim.lr = *lr;
    if (beta1) c.optim.beta1 = *beta1;
    if (beta2) c.optim.beta2 = *beta2;
    if (epsilon) c.optim.epsilon = *epsilon;
    if (batch_size) c.batch_size = *batch_size;
    if (epochs) c.epochs = *epochs;
    if (seed) {
      c.seed = *seed;
    } else if (config_file.empty()) {
      if (auto s = env_seed()) c.seed = *s;
    }
    if (precision) c.precision = parse_precision(*precision);
    if (dataset) c.dataset = *dataset;
    if (checkpoint) c.checkpoint = *checkpoint;
    if (report) c.report = *report;
    c.model = c.model.resolved();
    c.validate();
    return c;
  }
};

struct GenFlags {
  std::size_t classes = 7;
  std::size_t n = 700;
  std::optional<std::uint64_t> seed;
  std::size_t d = 8;
  double snr = 6.0;
  double val_frac = 0.2;
  double test_frac = 0.0;
  std::string rule = "text-audio";
  std::string len_t = "3:8", len_a = "4:8", len_v = "2:6";
  std::string out = "synthetic";
};

int cmd_gen_data(const GenFlags& g, std::ostream& out) {
  if (g.n == 0) fail(ErrorCode::kConfig, "--n must be positive");
  if (!(g.val_frac >= 0.0 && g.test_frac >= 0.0 && g.val_frac + g.test_frac < 1.0)) {
    fail(ErrorCode::kConfig, "--val-frac and --test-frac must be >= 0 and sum below 1");
  }
  SyntheticSpec spec;
  spec.classes = g.classes;
  spec.d = g.d;
  spec.snr = g.snr;
  spec.seed = g.seed ? *g.seed : env_seed().value_or(1);
  spec.n_val = static_cast<std::size_t>(std::llround(g.val_frac * static_cast<double>(g.n)));
  spec.n_test = static_cast<std::size_t>(std::llround(g.test_frac * static_cast<double>(g.n)));
  if (spec.n_val + spec.n_test >= g.n) fail(ErrorCode::kConfig, "split fractions leave no training utterances");
  spec.n_train = g.n - spec.n_val - spec.n_test;
  spec.lengths = {parse_range(g.len_t), parse_range(g.len_a), parse_range(g.len_v)};
  if (g.rule == "text-audio") {
    spec.rule = PlantingRule::kTextAudio;
  } else if (g.rule == "text-only") {
    spec.rule = PlantingRule::kTextOnly;
  } else {
    fail(ErrorCode::kConfig, "--rule must be text-audio or text-only");
  }
  const FeatureDataset ds = generate_synthetic(spec);

  const fs::path manifest = g.out + ".json";
  const fs::path features = g.out + ".bin";
  if (manifest.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(manifest.parent_path(), ec);
    if (ec) fail(ErrorCode::kIo, "cannot create directory " + manifest.parent_path().string() + ": " + ec.message());
  }
  save_dataset(ds, manifest, features);

  out << "wrote " << manifest.string() << " and " << features.string() << "\n";
  out << "utterances " << ds.utterances.size() << "  d " << ds.d << "  classes " << ds.classes() << "  seed "
      << spec.seed << "\n";
  out << std::left << std::setw(12) << "class";
  for (const auto& [name, _] : ds.splits) out << std::right << std::setw(8) << name;
  out << "\n";
  for (std::size_t c = 0; c < ds.classes(); ++c) {
    out << std::left << std::setw(12) << ds.label_map[c];
    for (const auto& [name, idx] : ds.splits) {
      std::size_t count = 0;
      for (auto i : idx) count += ds.utterances[i].label == static_cast<int>(c) ? 1 : 0;
      out << std::right << std::setw(8) << count;
    }
    out << "\n";
  }
  return 0;
}

int cmd_train(const RunFlags& flags, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  if (cfg.dataset.empty()) fail(ErrorCode::kConfig, "train needs --dataset");
  const FeatureDataset ds = load_dataset(cfg.dataset);
  check_compatible(cfg.model, ds);
  AimditModel model = make_model(cfg.model, cfg.seed);
  out << "training " << model.parameter_count() << " parameters on " << ds.split("train").size()
      << " utterances (" << precision_name(cfg.precision) << ")\n";
  const TrainReport report = train(model, ds, cfg, &out);
  nlohmann::json echo = cfg.to_json();
  echo["label_map"] = ds.label_map;
  save_checkpoint(cfg.checkpoint, model, echo);
  nlohmann::json j = report.to_json();
  j["label_map"] = ds.label_map;
  io::write_text(cfg.report, j.dump(2) + "\n");
  out << "best epoch " << report.best_epoch << "; final metrics on '" << report.final_split << "':\n";
  print_metrics_table(out, report.final_metrics, ds.label_map);
  out << "checkpoint " << cfg.checkpoint << "  report " << cfg.report << "\n";
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string report = "eval_report.json";
  std::optional<std::string> precision;
};

int cmd_eval(const EvalFlags& e, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(e.checkpoint);
  const AimditModel model = model_from_checkpoint(ckpt);
  const FeatureDataset ds = load_dataset(e.dataset);
  check_compatible(model.config, ds);
  nn::Precision precision = nn::Precision::kFloat32;
  if (e.precision) {
    precision = parse_precision(*e.precision);
  } else if (ckpt.config.contains("precision")) {
    precision = parse_precision(ckpt.config.at("precision").get<std::string>());
  }
  const EvalResult r = evaluate(model, ds, e.split, precision);
  nlohmann::json j = {{"checkpoint", e.checkpoint},
                      {"dataset", e.dataset},
                      {"split", e.split},
                      {"precision", precision_name(precision)},
                      {"loss", r.loss},
                      {"metrics", r.metrics.to_json()},
                      {"label_map", ds.label_map}};
  io::write_text(e.report, j.dump(2) + "\n");
  out << "split '" << e.split << "'  utterances " << r.predictions.size() << "  loss " << std::fixed
      << std::setprecision(6) << r.loss << std::defaultfloat << "\n";
  print_metrics_table(out, r.metrics, ds.label_map);
  out << "report " << e.report << "\n";
  return 0;
}

struct GradFlags {
  std::size_t d = 4;
  std::size_t heads = 2;
  std::size_t man_layers = 2;
  std::size_t min_layers = 2;
  std::size_t classes = 7;
  std::string kernel_scales = "1,3,5";
  std::size_t max_len = 4;
  std::size_t batch = 2;
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  std::string fault_op;
  double fault_scale = 1.01;
};

int cmd_gradcheck(const GradFlags& g, std::ostream& out) {
  GradcheckOptions o;
  o.model.d = g.d;
  o.model.heads = g.heads;
  o.model.man_layers = g.man_layers;
  o.model.min_layers = g.min_layers;
  o.model.classes = g.classes;
  o.model.kernel_scales = parse_scales(g.kernel_scales);
  o.max_len = g.max_len;
  o.batch = g.batch;
  o.seed = g.seed;
  o.tolerance = g.tolerance;
  o.fault_op = g.fault_op;
  o.fault_scale = g.fault_scale;
  const GradcheckReport r = run_gradcheck(o);
  out << std::left << std::setw(24) << "group" << std::right << std::setw(9) << "entries" << std::setw(16)
      << "max_rel_error" << "  status\n";
  for (const auto& grp : r.groups) {
    out << std::left << std::setw(24) << grp.group << std::right << std::setw(9) << grp.entries << std::setw(16)
        << std::scientific << std::setprecision(3) << grp.max_rel_error << std::defaultfloat << "  "
        << (grp.passed ? "PASS" : "FAIL") << "\n";
  }
  out << (r.passed ? "gradcheck PASS" : "gradcheck FAIL") << " (tolerance " << o.tolerance << ", " << std::fixed
      << std::setprecision(1) << r.seconds << " s)\n"
      << std::defaultfloat;
  if (!r.passed) fail(ErrorCode::kNumeric, "finite-difference gradient check failed");
  return 0;
}

// "man.joint.l0.b1.kernel" -> "man.joint"; "min.cmt.text.l2..." -> "min.cmt.text"; "clf.w1" -> "clf".
std::string module_of(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  if (parts.front() == "clf") return "clf";
  if (parts.front() == "min" && parts.size() > 2) return parts[0] + "." + parts[1] + "." + parts[2];
  if (parts.size() > 1) return parts[0] + "." + parts[1];
  return parts.front();
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(path);
  const AimditModel model = model_from_checkpoint(ckpt);
  out << "checkpoint " << path << "\n";
  out << "format version " << ckpt.version << "\n";
  out << "config " << ckpt.config.dump() << "\n";
  std::vector<std::pair<std::string, std::size_t>> modules;
  std::size_t total = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::string mod = module_of(name);
    if (modules.empty() || modules.back().first != mod) modules.emplace_back(mod, 0);
    modules.back().second += t.numel();
    total += t.numel();
  }
  out << std::left << std::setw(20) << "module" << std::right << std::setw(12) << "parameters" << "\n";
  for (const auto& [mod, count] : modules) out << std::left << std::setw(20) << mod << std::right << std::setw(12) << count << "\n";
  out << std::left << std::setw(20) << "total" << std::right << std::setw(12) << total << "\n";
  (void)model;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal emotion recognition: MAN/MIN fusion training and evaluation"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic feature dataset");
  gen_cmd->add_option("--classes", gen.classes);
  gen_cmd->add_option("--n", gen.n, "total utterances");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed (falls back to $AIMDIT_SEED)");
  gen_cmd->add_option("--d", gen.d);
  gen_cmd->add_option("--snr", gen.snr, "template-to-noise power ratio");
  gen_cmd->add_option("--val-frac", gen.val_frac);
  gen_cmd->add_option("--test-frac", gen.test_frac);
  gen_cmd->add_option("--rule", gen.rule, "text-audio or text-only");
  gen_cmd->add_option("--len-t", gen.len_t, "text length range MIN:MAX");
  gen_cmd->add_option("--len-a", gen.len_a, "audio length range MIN:MAX");
  gen_cmd->add_option("--len-v", gen.len_v, "visual length range MIN:MAX");
  gen_cmd->add_option("--out", gen.out, "output prefix; writes PREFIX.json and PREFIX.bin");

  RunFlags run;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + report");
  run.add_to(*train_cmd);

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--dataset", ev.dataset)->required();
  eval_cmd->add_option("--split", ev.split);
  eval_cmd->add_option("--report", ev.report);
  eval_cmd->add_option("--precision", ev.precision);

  GradFlags gf;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check on a tiny model");
  grad_cmd->add_option("--d", gf.d);
  grad_cmd->add_option("--heads", gf.heads);
  grad_cmd->add_option("--man-layers", gf.man_layers);
  grad_cmd->add_option("--min-layers", gf.min_layers);
  grad_cmd->add_option("--classes", gf.classes);
  grad_cmd->add_option("--kernel-scales", gf.kernel_scales);
  grad_cmd->add_option("--max-len", gf.max_len);
  grad_cmd->add_option("--batch", gf.batch);
  grad_cmd->add_option("--seed", gf.seed);
  grad_cmd->add_option("--tolerance", gf.tolerance);
  grad_cmd->add_option("--inject-fault", gf.fault_op, "test hook: corrupt this primitive's backward");
  grad_cmd->add_option("--fault-scale", gf.fault_scale);

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint summary");
  inspect_cmd->add_option("--checkpoint", inspect_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "aimdit: error[E_USAGE]: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(run, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*grad_cmd) return cmd_gradcheck(gf, out);
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
  } catch (const Error& e) {
    err << "aimdit: error[" << error_token(e.code()) << "]: " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    err << "aimdit: error[E_INTERNAL]: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace aimdit
