#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdx/data.hpp"
#include "hdx/evalharness.hpp"
#include "hdx/nnet.hpp"
#include "hdx/stein.hpp"

namespace hdx::cli {

// Every field has a default; a config file only needs the keys it changes.
struct DatasetSpec {
  // synthetic:two_moons | synthetic:rectangles | csv:<path> | idx:<images>,<labels>
  std::string source = "synthetic:two_moons";
  std::size_t n = 500;
  double noise = 0.1;
  std::string label_column = "label";
  bool standardize = false;
};

struct ExplainerSpec {
  Variant variant = Variant::kRaw;
  KernelSpec kernel;
  std::size_t top_k = 3;
};

struct ExperimentSpec {
  Augmentation augmentation = Augmentation::kNoise;
  std::size_t trials = 30;
  std::size_t sample_size = 100;
  std::vector<std::size_t> ks = {1, 3, 5};
  double flip_fraction = 0.05;
  // Each entry is a scalar magnitude (along shift_direction) or a full vector.
  std::vector<std::vector<double>> shifts = {{0.0}, {0.25}, {0.5}};
  std::optional<std::vector<double>> shift_direction;
  std::vector<std::string> methods = {"hd-explain", "hd-explain-star", "tracin-last", "rep-sim"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  TrainConfig model;
  ExplainerSpec explainer;
  ExperimentSpec experiment;

  // Throws ArgumentError on unknown keys or ill-typed values.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names = {"hd-explain", "hd-explain-star", "tracin-last",
                                                 "rep-sim"};
  return names;
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Resolves scalar/vector shift entries against a dataset.
std::vector<Vector> resolve_shifts(const ExperimentSpec& spec, const Dataset& dataset);

}  // namespace hdx::cli
