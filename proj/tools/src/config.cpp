#include "spiked/cli/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>

#include "spiked/serialize.hpp"

namespace spiked::cli {

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out = "invalid configuration";
  for (const auto& l : lines) out += "\n  " + l;
  return out;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{"preset", "d",          "N",           "r",     "s",
                                          "betas",  "rho",        "R_uu",        "n_trials", "seed",
                                          "tolerances", "output_dir", "vv_offdiag", "gamma_ratio", "sweep",
                                          "init",   "init_noise", "noise",       "threads"};
  return keys;
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, std::vector<std::string>& errs, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errs.push_back(prefix + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

// Integers must be given as JSON integers; 3.0 for d is rejected rather than truncated.
void read_int(const nlohmann::json& j, const char* key, int& out, std::vector<std::string>& errs,
              const std::string& prefix = "") {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    errs.push_back(prefix + key + ": expected an integer, got " + v.dump());
    return;
  }
  const auto x = v.get<std::int64_t>();
  if (x < -2147483647 || x > 2147483647) {
    errs.push_back(prefix + key + ": out of range");
    return;
  }
  out = static_cast<int>(x);
}

void read_real(const nlohmann::json& j, const char* key, double& out, std::vector<std::string>& errs,
               const std::string& prefix = "") {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number()) {
    errs.push_back(prefix + key + ": expected a number, got " + v.dump());
    return;
  }
  out = v.get<double>();
}

std::string show(double x) { return format_double(x); }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

std::vector<double> Sweep::points() const {
  std::vector<double> out;
  if (steps <= 1) {
    out.push_back(from);
    return out;
  }
  out.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) out.push_back(from + (to - from) * k / (steps - 1));
  return out;
}

Matrix ExperimentConfig::signal_gram() const {
  if (R_uu) return *R_uu;
  Matrix g = Matrix::Identity(r, r);
  if (rho) {
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        if (i != j) g(i, j) = *rho;
      }
    }
  }
  return g;
}

void validate(const ExperimentConfig& cfg) {
  std::vector<std::string> errs;
  auto fail = [&](const std::string& field, const std::string& msg) { errs.push_back(field + ": " + msg); };

  if (cfg.d < 3 || cfg.d > kMaxOrder) fail("d", "must be in [3, " + std::to_string(kMaxOrder) + "], got " + std::to_string(cfg.d));
  if (cfg.N < 2) fail("N", "must be at least 2, got " + std::to_string(cfg.N));
  if (cfg.r < 1) fail("r", "must be at least 1, got " + std::to_string(cfg.r));
  if (cfg.r > cfg.N) fail("r", "must not exceed N");
  if (cfg.s < 1) fail("s", "must be at least 1, got " + std::to_string(cfg.s));
  if (cfg.s > cfg.N) fail("s", "must not exceed N");

  if (static_cast<int>(cfg.betas.size()) != cfg.r) {
    fail("betas", "expected " + std::to_string(cfg.r) + " entries (r), got " + std::to_string(cfg.betas.size()));
  } else {
    for (std::size_t i = 0; i < cfg.betas.size(); ++i) {
      if (!std::isfinite(cfg.betas[i])) fail("betas", "entry " + std::to_string(i) + " is not finite");
      if (i > 0 && std::abs(cfg.betas[i]) > std::abs(cfg.betas[i - 1])) {
        fail("betas", "must be sorted by decreasing magnitude");
        break;
      }
    }
  }

  if (cfg.rho && cfg.R_uu) fail("rho", "give either rho or R_uu, not both");
  if (cfg.rho && !(std::abs(*cfg.rho) < 1.0)) fail("rho", "must lie in (-1, 1), got " + show(*cfg.rho));
  if (cfg.R_uu) {
    const Matrix& g = *cfg.R_uu;
    if (g.rows() != cfg.r || g.cols() != cfg.r) {
      fail("R_uu", "must be r x r");
    } else if (!g.allFinite() || (g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
               (g.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) {
      fail("R_uu", "must be symmetric with unit diagonal");
    } else if (Eigen::LLT<Matrix>(g).info() != Eigen::Success) {
      fail("R_uu", "must be positive definite");
    }
  }
  if (cfg.rho && cfg.r > 1 && !cfg.R_uu && Eigen::LLT<Matrix>(cfg.signal_gram()).info() != Eigen::Success) {
    fail("rho", "equicorrelation matrix is not positive definite for this r");
  }

  if (cfg.n_trials < 1) fail("n_trials", "must be at least 1, got " + std::to_string(cfg.n_trials));
  if (!(cfg.tolerances.critical_tol > 0.0)) fail("tolerances.critical_tol", "must be positive");
  if (cfg.tolerances.max_iter < 1) fail("tolerances.max_iter", "must be at least 1");
  if (!(cfg.tolerances.solver_tol > 0.0)) fail("tolerances.solver_tol", "must be positive");
  if (cfg.tolerances.n_starts < 1) fail("tolerances.n_starts", "must be at least 1");
  if (cfg.output_dir.empty()) fail("output_dir", "must not be empty");
  if (!(std::abs(cfg.vv_offdiag) < 1.0)) fail("vv_offdiag", "must lie in (-1, 1)");
  if (!(cfg.gamma_ratio > 0.0 && cfg.gamma_ratio <= 1.0)) fail("gamma_ratio", "must lie in (0, 1]");
  if (!(cfg.sweep.from > 0.0) || !std::isfinite(cfg.sweep.from)) fail("sweep.from", "must be positive");
  if (!(cfg.sweep.to >= cfg.sweep.from) || !std::isfinite(cfg.sweep.to)) fail("sweep.to", "must be at least sweep.from");
  if (cfg.sweep.steps < 1) fail("sweep.steps", "must be at least 1");
  if (cfg.init != "random" && cfg.init != "signal" && cfg.init != "perturbed") {
    fail("init", "must be one of random, signal, perturbed; got \"" + cfg.init + "\"");
  }
  if (!(cfg.init_noise >= 0.0) || !std::isfinite(cfg.init_noise)) fail("init_noise", "must be non-negative");
  if (cfg.threads < 1) fail("threads", "must be at least 1");

  if (!errs.empty()) throw ConfigError(std::move(errs));
}

void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  std::vector<std::string> errs;
  if (!j.is_object()) throw ConfigError({"<root>: expected a JSON object"});
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().count(key)) errs.push_back(key + ": unknown field");
  }
  read(j, "preset", cfg.preset, errs);
  read_int(j, "d", cfg.d, errs);
  read_int(j, "N", cfg.N, errs);
  read_int(j, "r", cfg.r, errs);
  read_int(j, "s", cfg.s, errs);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || !std::all_of(b.begin(), b.end(), [](const auto& x) { return x.is_number(); })) {
      errs.push_back("betas: expected an array of numbers");
    } else {
      cfg.betas = b.get<std::vector<double>>();
    }
  }
  if (j.contains("rho")) {
    if (j.at("rho").is_null()) {
      cfg.rho.reset();
    } else if (!j.at("rho").is_number()) {
      errs.push_back("rho: expected a number");
    } else {
      cfg.rho = j.at("rho").get<double>();
      cfg.R_uu.reset();
    }
  }
  if (j.contains("R_uu")) {
    if (j.at("R_uu").is_null()) {
      cfg.R_uu.reset();
    } else {
      try {
        cfg.R_uu = matrix_from_json(j.at("R_uu"));
        cfg.rho.reset();
      } catch (const std::exception&) {
        errs.push_back("R_uu: expected a square array of rows");
      }
    }
  }
  if (j.contains("n_trials")) read_int(j, "n_trials", cfg.n_trials, errs);
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (v.is_number_unsigned()) {
      cfg.seed = v.get<std::uint64_t>();
    } else {
      errs.push_back("seed: expected a non-negative integer, got " + v.dump());
    }
  }
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    if (!t.is_object()) {
      errs.push_back("tolerances: expected an object");
    } else {
      for (const auto& [key, _] : t.items()) {
        if (key != "critical_tol" && key != "max_iter" && key != "solver_tol" && key != "n_starts") {
          errs.push_back("tolerances." + key + ": unknown field");
        }
      }
      read_real(t, "critical_tol", cfg.tolerances.critical_tol, errs, "tolerances.");
      read_int(t, "max_iter", cfg.tolerances.max_iter, errs, "tolerances.");
      read_real(t, "solver_tol", cfg.tolerances.solver_tol, errs, "tolerances.");
      read_int(t, "n_starts", cfg.tolerances.n_starts, errs, "tolerances.");
    }
  }
  read(j, "output_dir", cfg.output_dir, errs);
  read_real(j, "vv_offdiag", cfg.vv_offdiag, errs);
  read_real(j, "gamma_ratio", cfg.gamma_ratio, errs);
  if (j.contains("sweep")) {
    const auto& sw = j.at("sweep");
    if (!sw.is_object()) {
      errs.push_back("sweep: expected an object");
    } else {
      for (const auto& [key, _] : sw.items()) {
        if (key != "from" && key != "to" && key != "steps") errs.push_back("sweep." + key + ": unknown field");
      }
      read_real(sw, "from", cfg.sweep.from, errs, "sweep.");
      read_real(sw, "to", cfg.sweep.to, errs, "sweep.");
      read_int(sw, "steps", cfg.sweep.steps, errs, "sweep.");
    }
  }
  read(j, "init", cfg.init, errs);
  read_real(j, "init_noise", cfg.init_noise, errs);
  read(j, "noise", cfg.noise, errs);
  read_int(j, "threads", cfg.threads, errs);
  if (!errs.empty()) throw ConfigError(std::move(errs));
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["preset"] = cfg.preset;
  j["d"] = cfg.d;
  j["N"] = cfg.N;
  j["r"] = cfg.r;
  j["s"] = cfg.s;
  j["betas"] = cfg.betas;
  j["rho"] = cfg.rho ? nlohmann::json(*cfg.rho) : nlohmann::json(nullptr);
  j["R_uu"] = cfg.R_uu ? matrix_to_json(*cfg.R_uu) : nlohmann::json(nullptr);
  j["n_trials"] = cfg.n_trials;
  j["seed"] = cfg.seed;
  j["tolerances"] = {{"critical_tol", cfg.tolerances.critical_tol},
                     {"max_iter", cfg.tolerances.max_iter},
                     {"solver_tol", cfg.tolerances.solver_tol},
                     {"n_starts", cfg.tolerances.n_starts}};
  j["output_dir"] = cfg.output_dir;
  j["vv_offdiag"] = cfg.vv_offdiag;
  j["gamma_ratio"] = cfg.gamma_ratio;
  j["sweep"] = {{"from", cfg.sweep.from}, {"to", cfg.sweep.to}, {"steps", cfg.sweep.steps}};
  j["init"] = cfg.init;
  j["init_noise"] = cfg.init_noise;
  j["noise"] = cfg.noise;
  j["threads"] = cfg.threads;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  // Where results land and how many workers produced them do not change them.
  j.erase("output_dir");
  j.erase("threads");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<Preset>& presets() {
  using nlohmann::json;
  static const std::vector<Preset> all{
      {"fig1a", "spectrum of the flattening, pure noise, d=3, N=200, R_vv off-diagonal 0.5, gamma ratio 0.4",
       json{{"d", 3}, {"N", 200}, {"r", 2}, {"s", 2}, {"betas", {0.0, 0.0}}, {"vv_offdiag", 0.5}, {"gamma_ratio", 0.4}}},
      {"fig1b", "spectrum of the flattening, pure noise, d=4, N=100, R_vv off-diagonal 0.5, gamma ratio 0.4",
       json{{"d", 4}, {"N", 100}, {"r", 2}, {"s", 2}, {"betas", {0.0, 0.0}}, {"vv_offdiag", 0.5}, {"gamma_ratio", 0.4}}},
      {"fig2", "alignment sweep, d=3, N=150, beta_1 = beta_2, rho = 0",
       json{{"d", 3}, {"N", 150}, {"r", 2}, {"s", 2}, {"betas", {1.0, 1.0}}, {"rho", 0.0}, {"init", "signal"}}},
      {"fig3", "alignment sweep, d=3, N=150, beta_1 = beta_2, rho = 0.7",
       json{{"d", 3}, {"N", 150}, {"r", 2}, {"s", 2}, {"betas", {1.0, 1.0}}, {"rho", 0.7}, {"init", "signal"}}},
      {"fig4", "plug-in estimation, d=3, N=150, beta = (6, 3), rho = 0.7",
       json{{"d", 3}, {"N", 150}, {"r", 2}, {"s", 2}, {"betas", {6.0, 3.0}}, {"rho", 0.7}, {"init", "signal"}}},
      {"noiseless", "critical point of a noiseless rank-2 tensor, d=3, N=50, beta = (5, 3), orthogonal signals",
       json{{"d", 3}, {"N", 50}, {"r", 2}, {"s", 2}, {"betas", {5.0, 3.0}}, {"rho", 0.0}, {"noise", false},
            {"init", "perturbed"}, {"n_trials", 1}}},
  };
  return all;
}

ExperimentConfig preset_config(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) {
      ExperimentConfig cfg;
      apply_json(cfg, p.overrides);
      cfg.preset = name;
      return cfg;
    }
  }
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError({"preset: unknown preset \"" + name + "\" (known: " + known + ")"});
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path});
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({"config: " + path + " is not valid JSON (" + e.what() + ")"});
  }
}

}  // namespace spiked::cli
