#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "hdx/error.hpp"

namespace hdx::cli {

namespace {

using nlohmann::json;

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ArgumentError("config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ArgumentError("config: '" + where_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k))
        throw ArgumentError("config: unknown key '" + (where_.empty() ? k : where_ + "." + k) + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  ObjectReader root(j, "");
  root.read("seed", c.seed);

  if (const json* d = root.child("dataset")) {
    ObjectReader r(*d, "dataset");
    r.read("source", c.dataset.source);
    r.read("n", c.dataset.n);
    r.read("noise", c.dataset.noise);
    r.read("label_column", c.dataset.label_column);
    r.read("standardize", c.dataset.standardize);
    r.finish();
  }

  if (const json* m = root.child("model")) {
    ObjectReader r(*m, "model");
    r.read("hidden", c.model.hidden);
    r.read("epochs", c.model.epochs);
    r.read("batch_size", c.model.batch_size);
    r.read("learning_rate", c.model.learning_rate);
    r.read("momentum", c.model.momentum);
    r.read("l2_weight_decay", c.model.l2_weight_decay);
    r.read("validation_fraction", c.model.validation_fraction);
    r.finish();
  }

  if (const json* e = root.child("explainer")) {
    ObjectReader r(*e, "explainer");
    std::string variant(to_string(c.explainer.variant));
    std::string kernel(to_string(c.explainer.kernel.type));
    r.read("variant", variant);
    r.read("kernel", kernel);
    c.explainer.variant = parse_variant(variant);
    c.explainer.kernel.type = parse_kernel_type(kernel);
    if (const json* g = r.child("gamma")) {
      if (g->is_number()) {
        c.explainer.kernel.gamma = g->get<double>();
      } else if (!(g->is_null() || (g->is_string() && g->get<std::string>() == "median"))) {
        throw ArgumentError("config: 'explainer.gamma' must be a number, null or \"median\"");
      }
    }
    r.read("c", c.explainer.kernel.c);
    r.read("beta", c.explainer.kernel.beta);
    r.read("top_k", c.explainer.top_k);
    r.finish();
  }

  if (const json* x = root.child("experiment")) {
    ObjectReader r(*x, "experiment");
    std::string aug(to_string(c.experiment.augmentation));
    r.read("augmentation", aug);
    c.experiment.augmentation = parse_augmentation(aug);
    r.read("trials", c.experiment.trials);
    r.read("sample_size", c.experiment.sample_size);
    r.read("ks", c.experiment.ks);
    r.read("flip_fraction", c.experiment.flip_fraction);
    if (const json* s = r.child("shifts")) {
      if (!s->is_array()) throw ArgumentError("config: 'experiment.shifts' must be an array");
      c.experiment.shifts.clear();
      for (const auto& item : *s) {
        if (item.is_number()) {
          c.experiment.shifts.push_back({item.get<double>()});
        } else if (item.is_array()) {
          try {
            c.experiment.shifts.push_back(item.get<std::vector<double>>());
          } catch (const json::exception&) {
            throw ArgumentError("config: shift vectors must hold numbers");
          }
        } else {
          throw ArgumentError("config: each shift must be a number or an array of numbers");
        }
      }
    }
    if (const json* d = r.child("shift_direction")) {
      if (!d->is_null()) {
        try {
          c.experiment.shift_direction = d->get<std::vector<double>>();
        } catch (const json::exception&) {
          throw ArgumentError("config: 'experiment.shift_direction' must be an array of numbers");
        }
      }
    }
    r.read("methods", c.experiment.methods);
    for (const auto& m : c.experiment.methods)
      if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
        throw ArgumentError("config: unknown method '" + m + "'");
    r.finish();
  }
  root.finish();
  c.model.seed = c.seed;
  c.model.validate();
  if (c.explainer.top_k < 1) throw ArgumentError("config: explainer.top_k must be >= 1");
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ArgumentError("config " + path + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["dataset"] = {{"source", dataset.source},
                  {"n", dataset.n},
                  {"noise", dataset.noise},
                  {"label_column", dataset.label_column},
                  {"standardize", dataset.standardize}};
  j["model"] = {{"hidden", model.hidden},
                {"epochs", model.epochs},
                {"batch_size", model.batch_size},
                {"learning_rate", model.learning_rate},
                {"momentum", model.momentum},
                {"l2_weight_decay", model.l2_weight_decay},
                {"validation_fraction", model.validation_fraction}};
  j["explainer"] = {{"variant", std::string(to_string(explainer.variant))},
                    {"kernel", std::string(to_string(explainer.kernel.type))},
                    {"gamma", explainer.kernel.gamma ? json(*explainer.kernel.gamma) : json(nullptr)},
                    {"c", explainer.kernel.c},
                    {"beta", explainer.kernel.beta},
                    {"top_k", explainer.top_k}};
  json shifts = json::array();
  for (const auto& s : experiment.shifts) shifts.push_back(s.size() == 1 ? json(s[0]) : json(s));
  j["experiment"] = {{"augmentation", std::string(to_string(experiment.augmentation))},
                     {"trials", experiment.trials},
                     {"sample_size", experiment.sample_size},
                     {"ks", experiment.ks},
                     {"flip_fraction", experiment.flip_fraction},
                     {"shifts", shifts},
                     {"shift_direction", experiment.shift_direction
                                             ? json(*experiment.shift_direction)
                                             : json(nullptr)},
                     {"methods", experiment.methods}};
  return j;
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  const auto colon = spec.source.find(':');
  if (colon == std::string::npos)
    throw ArgumentError("dataset source '" + spec.source + "' needs a kind prefix");
  const std::string kind = spec.source.substr(0, colon);
  const std::string arg = spec.source.substr(colon + 1);

  auto finish = [&](Dataset d) { return spec.standardize ? standardize(d) : d; };
  if (kind == "synthetic") {
    if (arg == "two_moons") return finish(gen_two_moons(spec.n, spec.noise, seed));
    if (arg == "rectangles") return finish(gen_rectangles(spec.n, seed));
    throw ArgumentError("unknown synthetic dataset '" + arg + "'");
  }
  if (kind == "csv") return finish(load_csv(arg, spec.label_column));
  if (kind == "idx") {
    const auto comma = arg.find(',');
    if (comma == std::string::npos)
      throw ArgumentError("idx source needs '<images>,<labels>'");
    return finish(load_idx(arg.substr(0, comma), arg.substr(comma + 1)));
  }
  throw ArgumentError("unknown dataset kind '" + kind + "'");
}

std::vector<Vector> resolve_shifts(const ExperimentSpec& spec, const Dataset& dataset) {
  Vector direction = default_shift_direction(dataset);
  if (spec.shift_direction) {
    if (spec.shift_direction->size() != dataset.dim())
      throw ArgumentError("shift_direction has dimension " +
                          std::to_string(spec.shift_direction->size()) + ", dataset has " +
                          std::to_string(dataset.dim()));
    direction = Eigen::Map<const Vector>(spec.shift_direction->data(),
                                         static_cast<Eigen::Index>(spec.shift_direction->size()));
  }
  std::vector<Vector> out;
  for (const auto& s : spec.shifts) {
    if (s.size() == 1 && dataset.dim() != 1) {
      out.push_back(shifts_along({s[0]}, direction).front());
    } else if (s.size() == dataset.dim()) {
      out.push_back(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
    } else {
      throw ArgumentError("shift vector has dimension " + std::to_string(s.size()) +
                          ", dataset has " + std::to_string(dataset.dim()));
    }
  }
  return out;
}

}  // namespace hdx::cli
