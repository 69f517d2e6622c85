#include "commands.hpp"

#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hdx/error.hpp"
#include "hdx/evalharness.hpp"
#include "hdx/explain.hpp"
#include "hdx/io.hpp"
#include "run_config.hpp"

namespace hdx::cli {

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "table";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool out_required) {
  cmd->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Global seed (overrides the config file)");
  auto* out = cmd->add_option("--out", o.out, "Output artifact path");
  if (out_required) out->required();
  cmd->add_option("--format", o.format, "Console output format")
      ->check(CLI::IsMember({"table", "structured"}));
}

RunConfig load_config(const CommonOptions& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : RunConfig::from_file(o.config_path);
  if (o.seed) c.seed = *o.seed;
  c.model.seed = c.seed;
  return c;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void print_summary(std::ostream& out, const std::string& format, const json& j) {
  if (format == "structured") {
    out << j.dump(2) << '\n';
    return;
  }
  for (const auto& [k, v] : j.items())
    out << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
}

MLPClassifier model_for(const RunConfig& cfg, const Dataset& dataset, const std::string& model_path,
                        json& manifest) {
  if (!model_path.empty()) {
    manifest["model_path"] = model_path;
    return load_model(model_path);
  }
  TrainResult r = train(dataset, cfg.model);
  manifest["train_accuracy"] = r.train_accuracy;
  return std::move(r.model);
}

std::vector<double> parse_features(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::logic_error&) {
      throw ArgumentError("cannot parse feature value '" + cell + "'");
    }
  }
  if (out.empty()) throw ArgumentError("--features needs at least one value");
  return out;
}

json dataset_summary(const Dataset& d) {
  return {{"n", d.size()}, {"d", d.dim()}, {"num_classes", d.num_classes()}};
}

void write_report(const std::string& out, const std::string& csv, const json& manifest) {
  // Both files are rendered before either is written.
  const std::string manifest_text = manifest.dump(2) + "\n";
  write_file_atomic(out, csv);
  write_file_atomic(manifest_path(out), manifest_text);
}

// --- train -----------------------------------------------------------------

int cmd_train(const CommonOptions& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const Dataset dataset = load_dataset(cfg.dataset, cfg.seed);
  const TrainResult r = train(dataset, cfg.model);
  save_model(r.model, o.out);
  json s = {{"model", o.out},
            {"train_accuracy", r.train_accuracy},
            {"final_loss", r.loss_history.back()},
            {"fingerprint", hex64(r.model.fingerprint())}};
  if (cfg.model.validation_fraction > 0.0) s["validation_accuracy"] = r.validation_accuracy;
  print_summary(out, o.format, s);
  return kExitOk;
}

// --- cache -----------------------------------------------------------------

int cmd_cache(const CommonOptions& o, const std::string& model_path,
              const std::optional<std::string>& variant, std::ostream& out) {
  RunConfig cfg = load_config(o);
  if (variant) cfg.explainer.variant = parse_variant(*variant);
  const MLPClassifier model = load_model(model_path);
  const Dataset dataset = load_dataset(cfg.dataset, cfg.seed);
  const ScoreCache cache = build_cache(model, dataset, cfg.explainer.variant);
  save_cache(cache, o.out);
  print_summary(out, o.format,
                {{"cache", o.out},
                 {"variant", std::string(to_string(cache.variant()))},
                 {"n", cache.size()},
                 {"D", cache.dim()},
                 {"fingerprint", hex64(cache.fingerprint())}});
  return kExitOk;
}

// --- explain ---------------------------------------------------------------

struct ExplainOptions {
  std::string model_path;
  std::string cache_path;
  std::string features;
  std::optional<std::size_t> index;
  std::optional<std::size_t> top_k;
};

int cmd_explain(const CommonOptions& o, const ExplainOptions& e, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const MLPClassifier model = load_model(e.model_path);
  const ScoreCache cache = load_cache(e.cache_path);
  cache.check_model(model);

  Vector x;
  if (e.index) {
    const Dataset dataset = load_dataset(cfg.dataset, cfg.seed);
    if (*e.index >= dataset.size())
      throw ArgumentError("--index " + std::to_string(*e.index) + " outside dataset of size " +
                          std::to_string(dataset.size()));
    x = dataset.row(*e.index);
  } else {
    const std::vector<double> f = parse_features(e.features);
    x = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
  }

  ExplainerConfig ec;
  ec.variant = cache.variant();
  ec.kernel = resolve_kernel(cfg.explainer.kernel, cache.points(), cfg.seed);
  ec.top_k = e.top_k.value_or(cfg.explainer.top_k);
  const Explanation ex = explain(model, cache, x, ec);
  out << (o.format == "structured" ? ex.to_json() + "\n" : ex.to_table());
  return kExitOk;
}

// --- evaluate --------------------------------------------------------------

struct Method {
  std::unique_ptr<Explainer> explainer;
  std::string kernel;
};

Method make_method(const std::string& name, const MLPClassifier& model, const Dataset& dataset,
                   const RunConfig& cfg) {
  if (name == "hd-explain" || name == "hd-explain-star") {
    const Variant v = name == "hd-explain" ? Variant::kRaw : Variant::kLastLayer;
    ScoreCache cache = build_cache(model, dataset, v);
    const BaseKernel k = resolve_kernel(cfg.explainer.kernel, cache.points(), cfg.seed);
    return {std::make_unique<HdExplainer>(model, std::move(cache), k), k.describe()};
  }
  if (name == "tracin-last") return {std::make_unique<TracInLastExplainer>(model, dataset), ""};
  if (name == "rep-sim") return {std::make_unique<RepSimilarityExplainer>(model, dataset), ""};
  throw ArgumentError("unknown method '" + name + "'");
}

int cmd_evaluate(const CommonOptions& o, const std::string& model_path, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const Dataset dataset = load_dataset(cfg.dataset, cfg.seed);
  json manifest = {{"command", "evaluate"}, {"config", cfg.to_json()},
                   {"dataset", dataset_summary(dataset)}};
  const MLPClassifier model = model_for(cfg, dataset, model_path, manifest);
  manifest["model_fingerprint"] = hex64(model.fingerprint());

  HitRateConfig hc;
  hc.augmentation = cfg.experiment.augmentation;
  hc.trials_per_point = cfg.experiment.trials;
  hc.sample_size = cfg.experiment.sample_size;
  hc.ks = cfg.experiment.ks;
  hc.seed = cfg.seed;

  std::string csv = MetricsReport::csv_header();
  json kernels = json::object();
  json summary = json::array();
  for (const auto& name : cfg.experiment.methods) {
    const Method m = make_method(name, model, dataset, cfg);
    const MetricsReport r = hit_rate_experiment(*m.explainer, dataset, hc);
    csv += r.csv_rows();
    if (!m.kernel.empty()) kernels[name] = m.kernel;
    summary.push_back(json::parse(r.to_json()));
  }
  manifest["kernels"] = kernels;
  manifest["queries_per_method"] = hc.sample_size * hc.trials_per_point;
  write_report(o.out, csv, manifest);
  if (o.format == "structured") {
    out << summary.dump(2) << '\n';
  } else {
    out << csv;
  }
  return kExitOk;
}

// --- debug -----------------------------------------------------------------

int cmd_debug(const CommonOptions& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const Dataset dataset = load_dataset(cfg.dataset, cfg.seed);
  std::vector<Variant> variants;
  for (const auto& m : cfg.experiment.methods) {
    if (m == "hd-explain") variants.push_back(Variant::kRaw);
    if (m == "hd-explain-star") variants.push_back(Variant::kLastLayer);
  }
  if (variants.empty())
    throw ArgumentError("debug needs hd-explain and/or hd-explain-star in experiment.methods");

  const std::vector<DebugReport> reports = label_flip_debug_experiment(
      dataset, cfg.experiment.flip_fraction, cfg.model, cfg.explainer.kernel, cfg.seed, variants);

  std::string csv = DebugReport::csv_header();
  for (const auto& r : reports) csv += r.csv_rows(cfg.seed);
  json manifest = {{"command", "debug"},
                   {"config", cfg.to_json()},
                   {"dataset", dataset_summary(dataset)},
                   {"flip_count", reports.front().flip_count},
                   {"flipped_indices", reports.front().flipped},
                   {"train_accuracy_on_corrupted", reports.front().train_accuracy}};
  write_report(o.out, csv, manifest);
  if (o.format == "structured") {
    print_summary(out, o.format, manifest);
  } else {
    out << "flip_count: " << reports.front().flip_count << '\n' << csv;
  }
  return kExitOk;
}

// --- ksd-shift -------------------------------------------------------------

int cmd_ksd_shift(const CommonOptions& o, const std::string& model_path, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const Dataset dataset = load_dataset(cfg.dataset, cfg.seed);
  json manifest = {{"command", "ksd-shift"}, {"config", cfg.to_json()},
                   {"dataset", dataset_summary(dataset)}};
  const MLPClassifier model = model_for(cfg, dataset, model_path, manifest);
  manifest["model_fingerprint"] = hex64(model.fingerprint());

  const ScoreCache base = build_cache(model, dataset, Variant::kRaw);
  const BaseKernel kernel = resolve_kernel(cfg.explainer.kernel, base.points(), cfg.seed);
  manifest["kernel"] = kernel.describe();

  const std::vector<ShiftResult> rows =
      ksd_shift_experiment(model, dataset, resolve_shifts(cfg.experiment, dataset), kernel);

  std::ostringstream csv;
  csv.precision(17);
  csv << "shift_index,shift_norm,shift,ksd_vstat,std_error\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv << i << ',' << rows[i].norm << ',';
    for (Eigen::Index j = 0; j < rows[i].shift.size(); ++j)
      csv << (j ? ";" : "") << rows[i].shift(j);
    csv << ',' << rows[i].ksd.value << ',' << rows[i].ksd.std_error << '\n';
  }
  write_report(o.out, csv.str(), manifest);
  out << csv.str();
  return kExitOk;
}

}  // namespace

std::string manifest_path(const std::string& report_path) {
  return report_path + ".manifest.json";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hdx: explain classifier predictions with Stein-kernel ranked training examples"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string model_path;
  std::optional<std::string> variant;
  ExplainOptions ex;

  auto* train_cmd = app.add_subcommand("train", "Train a classifier and write the model binary");
  add_common(train_cmd, common, true);

  auto* cache_cmd = app.add_subcommand("cache", "Build and write the training score cache");
  add_common(cache_cmd, common, true);
  cache_cmd->add_option("--model", model_path, "Model binary")->required();
  cache_cmd->add_option("--variant", variant, "raw | last-layer (overrides config)");

  auto* explain_cmd = app.add_subcommand("explain", "Rank training points for one test input");
  add_common(explain_cmd, common, false);
  explain_cmd->add_option("--model", ex.model_path, "Model binary")->required();
  explain_cmd->add_option("--cache", ex.cache_path, "Score cache binary")->required();
  auto* feat = explain_cmd->add_option("--features", ex.features, "Comma-separated test features");
  auto* idx = explain_cmd->add_option("--index", ex.index, "Use this row of the configured dataset");
  feat->excludes(idx);
  explain_cmd->add_option("--top-k", ex.top_k, "Number of training points to return");

  auto* eval_cmd = app.add_subcommand("evaluate", "Hit rate, coverage and timing per method");
  add_common(eval_cmd, common, true);
  eval_cmd->add_option("--model", model_path, "Use this model instead of training one");

  auto* debug_cmd = app.add_subcommand("debug", "Label-flip detection via self-influence");
  add_common(debug_cmd, common, true);

  auto* shift_cmd = app.add_subcommand("ksd-shift", "KSD of shifted training data");
  add_common(shift_cmd, common, true);
  shift_cmd->add_option("--model", model_path, "Use this model instead of training one");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("hdx");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "hdx: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(common, out);
    if (cache_cmd->parsed()) return cmd_cache(common, model_path, variant, out);
    if (explain_cmd->parsed()) {
      if (ex.features.empty() && !ex.index) {
        err << "hdx explain: one of --features or --index is required\n";
        return kExitUsage;
      }
      return cmd_explain(common, ex, out);
    }
    if (eval_cmd->parsed()) return cmd_evaluate(common, model_path, out);
    if (debug_cmd->parsed()) return cmd_debug(common, out);
    if (shift_cmd->parsed()) return cmd_ksd_shift(common, model_path, out);
  } catch (const Error& e) {
    err << "hdx: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "hdx: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hdx::cli
