#pragma once

// Experiment configuration for the command line tool: one JSON document per
// run, layered as defaults <- preset <- --config file <- flags.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spiked/tensor.hpp"

namespace spiked::cli {

// Rejected configuration; what() lists one "field: problem" line per failure.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct Tolerances {
  double critical_tol = 1e-8;
  int max_iter = 1000;
  double solver_tol = 1e-8;
  int n_starts = 64;
};

struct Sweep {
  double from = 0.5;
  double to = 12.0;
  int steps = 24;

  // Evenly spaced scales for beta_1, endpoints included.
  std::vector<double> points() const;
};

struct ExperimentConfig {
  std::string preset;  // provenance only
  int d = 3;
  int N = 100;
  int r = 2;
  int s = 2;
  std::vector<double> betas{10.0, 10.0};
  std::optional<double> rho;
  std::optional<Matrix> R_uu;
  int n_trials = 10;
  std::uint64_t seed = 0;
  Tolerances tolerances;
  std::string output_dir = "out";
  // spectrum: pure-noise tensor with R_vv off-diagonals and gamma_{i+1}/gamma_i
  double vv_offdiag = 0.5;
  double gamma_ratio = 0.4;
  // align: beta = scale * betas / |betas_1| for each scale of the sweep
  Sweep sweep;
  // critical point initialization: random | signal | perturbed
  std::string init = "signal";
  double init_noise = 0.1;
  bool noise = true;
  int threads = 1;

  // r x r signal correlation resolved from rho or R_uu (identity if neither).
  Matrix signal_gram() const;
};

// Throws ConfigError listing every invalid field.
void validate(const ExperimentConfig& cfg);

// Applies the keys present in `j` on top of `cfg`; unknown keys and type
// mismatches are config errors.
void apply_json(ExperimentConfig& cfg, const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical JSON of the config without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct Preset {
  std::string name;
  std::string description;
  nlohmann::json overrides;
};

const std::vector<Preset>& presets();
// Throws ConfigError for unknown names.
ExperimentConfig preset_config(const std::string& name);

// Reads and parses a JSON file; IO and parse failures are ConfigErrors.
nlohmann::json read_config_file(const std::string& path);

}  // namespace spiked::cli
