#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tflab {

inline constexpr const char* kVersion = "1.0.0";
/// Version of the per-trial CSV layout, echoed in every manifest.
inline constexpr int kCsvSchema = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Experiment { Fs, Biparam, Cordoba, CordobaWeighted, Carleson, Principle, Estimate22, Decompose };

Experiment parse_experiment(const std::string& name);
std::string experiment_name(Experiment e);

struct ExperimentConfig {
  Experiment experiment = Experiment::Fs;
  /// 1D resolution, or the side resolution of the square for the planar
  /// experiments; each experiment has its own default.
  std::optional<int> resolution;
  std::size_t family_size = 4;
  std::optional<double> p, q, t, eps;
  double p0 = 1.5, p1 = 4.0;
  int trials = 10;
  std::uint64_t seed = 0;
  // decompose inputs
  std::string collection_path, signal_path, set_path, choice_path;
};

/// Fills defaults and throws ConfigError naming the violated range.
ExperimentConfig validated(ExperimentConfig c);

nlohmann::ordered_json config_to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Seed of trial i: the i-th split of the run seed.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t i);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0: hardware
/// concurrency). Results are keyed by index, so the output never depends on
/// scheduling; the first exception by index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

struct PlotSeries {
  std::string title, xlabel, ylabel;
  std::vector<double> x, y;
  /// Optional fitted line y = slope x + intercept.
  std::optional<std::pair<double, double>> fit;
};

struct RunResult {
  nlohmann::ordered_json report;
  /// One flat object per trial; the CSV columns follow the keys of the first.
  std::vector<nlohmann::ordered_json> trials;
  nlohmann::ordered_json manifest;
  std::vector<PlotSeries> plots;
  bool ok = true;
  /// Postconditions that failed, by name.
  std::vector<std::string> failures;
};

RunResult run(const ExperimentConfig& config);

std::string trials_csv(const std::vector<nlohmann::ordered_json>& trials);
std::string render_svg(const PlotSeries& s);

/// Writes <out>.json, <out>.csv, <out>.manifest.json and, with plots, <out>.svg
/// (numbered when there are several).
void write_outputs(const RunResult& r, const std::string& out, bool plot);

}  // namespace tflab
