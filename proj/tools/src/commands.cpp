#include "spiked/cli/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spiked/alignments.hpp"
#include "spiked/critical.hpp"
#include "spiked/errors.hpp"
#include "spiked/inference.hpp"
#include "spiked/parallel.hpp"
#include "spiked/rng.hpp"
#include "spiked/serialize.hpp"
#include "spiked/spectrum.hpp"
#include "spiked/tensor.hpp"

#ifndef SPIKED_VERSION
#define SPIKED_VERSION "0.0.0"
#endif

namespace spiked::cli {

namespace fs = std::filesystem;

namespace {

struct Output {
  const ExperimentConfig& cfg;
  std::string command;
  std::string hash;

  Output(const ExperimentConfig& c, std::string cmd) : cfg(c), command(std::move(cmd)), hash(config_hash(c)) {
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
  }

  std::string banner() const {
    return "# spiked-tensor " + version() + " command=" + command + " config_hash=" + hash +
           " seed=" + std::to_string(cfg.seed) + "\n";
  }

  nlohmann::json header() const {
    nlohmann::json j;
    j["version"] = version();
    j["command"] = command;
    j["config_hash"] = hash;
    j["seed"] = cfg.seed;
    nlohmann::json c = to_json(cfg);
    c.erase("output_dir");
    c.erase("threads");
    j["config"] = std::move(c);
    return j;
  }

  void write(const std::string& name, const std::string& body) const {
    const fs::path path = fs::path(cfg.output_dir) / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
    out.flush();
    if (!out) throw IoError("cannot write " + path.string());
  }

  void write_csv(const std::string& name, const std::string& rows) const { write(name, banner() + rows); }
  void write_json(const std::string& name, const nlohmann::json& j) const { write(name, j.dump(2) + "\n"); }
};

std::string num(double x) { return format_double(x); }

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::uint64_t trial) { return derive_seed(cfg.seed, trial); }

SpikeModel make_model(const ExperimentConfig& cfg, const Vector& betas, std::uint64_t seed) {
  SpikeModel m;
  m.order = cfg.d;
  m.dim = cfg.N;
  m.betas = betas;
  m.us = correlated_unit_vectors(cfg.signal_gram(), cfg.N, derive_seed(seed, 1));
  m.seed = seed;
  return m;
}

Vector config_betas(const ExperimentConfig& cfg) {
  return Eigen::Map<const Vector>(cfg.betas.data(), static_cast<Eigen::Index>(cfg.betas.size()));
}

std::optional<CriticalPoint> make_init(const ExperimentConfig& cfg, const SpikeModel& m, std::uint64_t seed) {
  if (cfg.init == "random") return std::nullopt;
  CriticalPoint cp;
  const int s = cfg.s;
  cp.gammas.resize(s);
  cp.vs = m.us.leftCols(s);
  for (int j = 0; j < s; ++j) cp.gammas[j] = m.betas[j] != 0.0 ? m.betas[j] : 1.0;
  if (cfg.init == "perturbed") {
    CounterRng rng(derive_seed(seed, 3));
    for (int j = 0; j < s; ++j) {
      Vector g(cfg.N);
      for (int i = 0; i < cfg.N; ++i) g[i] = rng.normal();
      cp.vs.col(j) += cfg.init_noise * g / g.norm();
      cp.vs.col(j).normalize();
    }
  }
  return cp;
}

CriticalOptions critical_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  CriticalOptions o;
  o.tol = cfg.tolerances.critical_tol;
  o.max_iter = cfg.tolerances.max_iter;
  o.seed = derive_seed(seed, 2);
  return o;
}

void require_init_fits(const ExperimentConfig& cfg) {
  if (cfg.init != "random" && cfg.s > cfg.r) {
    throw ConfigError({"s: initialization \"" + cfg.init + "\" starts from the signals and needs s <= r"});
  }
}

Matrix equicorrelated(int n, double off) {
  Matrix g = Matrix::Constant(n, n, off);
  g.diagonal().setOnes();
  return g;
}

}  // namespace

std::string version() { return SPIKED_VERSION; }

nlohmann::json cmd_spectrum(const ExperimentConfig& cfg) {
  validate(cfg);
  const int s = cfg.s;
  const Matrix target = equicorrelated(s, cfg.vv_offdiag);
  if (Eigen::LLT<Matrix>(target).info() != Eigen::Success) {
    throw ConfigError({"vv_offdiag: R_vv is not positive definite for this s"});
  }
  Vector gammas(s);
  for (int j = 0; j < s; ++j) gammas[j] = std::pow(cfg.gamma_ratio, j);
  const SpectralLimit limit = kappa_spectrum(weight_matrix(target, gammas, cfg.d), cfg.d);

  const Vector betas = config_betas(cfg);
  const auto n = static_cast<std::size_t>(cfg.n_trials);
  std::vector<std::vector<double>> eig(n);
  std::vector<double> ks(n);
  parallel_for(n, cfg.threads, [&](std::size_t t) {
    const std::uint64_t seed = trial_seed(cfg, t);
    const SymTensor tensor = build_spiked(make_model(cfg, betas, seed), cfg.noise);
    CriticalPoint cp;
    cp.gammas = gammas;
    cp.vs = correlated_unit_vectors(target, cfg.N, derive_seed(seed, 4));
    eig[t] = empirical_spectrum(tensor, cp);
    const SpectralLimit lim = kappa_spectrum(weight_matrix(gram(cp.vs), gammas, cfg.d), cfg.d);
    ks[t] = ks_distance(eig[t], lim);
  });

  Output out(cfg, "spectrum");
  std::ostringstream csv;
  csv << "trial,seed,index,eigenvalue\n";
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < eig[t].size(); ++k) {
      csv << t << ',' << trial_seed(cfg, t) << ',' << k << ',' << num(eig[t][k]) << '\n';
    }
  }
  out.write_csv("eigenvalues.csv", csv.str());

  std::ostringstream dens;
  dens << "x,density,cdf\n";
  const double edge = 1.1 * std::max(limit.radius(), 1e-12);
  constexpr int kGrid = 401;
  for (int k = 0; k < kGrid; ++k) {
    const double x = -edge + 2.0 * edge * k / (kGrid - 1);
    dens << num(x) << ',' << num(limit_density(x, limit)) << ',' << num(limit_cdf(x, limit)) << '\n';
  }
  out.write_csv("limit_density.csv", dens.str());

  nlohmann::json j = out.header();
  j["limit"] = spectral_limit_to_json(limit);
  j["trials"] = nlohmann::json::array();
  double total = 0.0;
  double worst = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    j["trials"].push_back({{"trial", t}, {"seed", trial_seed(cfg, t)}, {"ks", ks[t]}});
    total += ks[t];
    worst = std::max(worst, ks[t]);
  }
  j["mean_ks"] = total / static_cast<double>(n);
  j["max_ks"] = worst;
  out.write_json("ks.json", j);
  return j;
}

nlohmann::json cmd_align(const ExperimentConfig& cfg) {
  validate(cfg);
  require_init_fits(cfg);
  if (cfg.betas[0] == 0.0) throw ConfigError({"betas: the sweep direction needs beta_1 != 0"});
  const Vector direction = config_betas(cfg) / std::abs(cfg.betas[0]);
  const Matrix R_uu = cfg.signal_gram();
  const int r = cfg.r;
  const std::vector<double> scales = cfg.sweep.points();
  std::vector<int> classes{1};
  if (cfg.s > 1) classes.push_back(cfg.s);
  const int s_max = classes.back();

  AlignmentOptions aopts;
  aopts.n_starts = cfg.tolerances.n_starts;
  aopts.tol = cfg.tolerances.solver_tol;
  aopts.seed = cfg.seed;
  aopts.threads = cfg.threads;

  // Theory: one solve per (scale, class).
  std::vector<std::vector<AlignmentSolution>> theory(scales.size() * classes.size());
  for (std::size_t k = 0; k < scales.size(); ++k) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      theory[k * classes.size() + c] = solve_alignment_system(scales[k] * direction, R_uu, cfg.d, classes[c], aopts);
    }
  }

  // Experiment: n_trials critical points per scale.
  struct Empirical {
    std::uint64_t seed = 0;
    std::string status;
    int iterations = 0;
    double residual = 0.0;
    std::optional<SummaryStats> stats;
  };
  const auto n_trials = static_cast<std::size_t>(cfg.n_trials);
  std::vector<Empirical> emp(scales.size() * n_trials);
  parallel_for(emp.size(), cfg.threads, [&](std::size_t idx) {
    const std::size_t k = idx / n_trials;
    const std::size_t t = idx % n_trials;
    Empirical& e = emp[idx];
    e.seed = derive_seed(derive_seed(cfg.seed, 1000003u + k), t);
    const SpikeModel model = make_model(cfg, scales[k] * direction, e.seed);
    const SymTensor tensor = build_spiked(model, cfg.noise);
    try {
      const CriticalResult res =
          find_critical_points(tensor, cfg.s, make_init(cfg, model, e.seed), critical_options(cfg, e.seed));
      e.status = res.report.converged ? "converged" : "nonconverged";
      e.iterations = res.report.iterations;
      e.residual = res.report.residual;
      e.stats = summary_statistics(res.point, model);
    } catch (const Error& err) {
      e.status = "failed";
    }
  });

  Output out(cfg, "align");
  std::ostringstream th;
  th << "scale,class,branch,status";
  for (int i = 0; i < r; ++i) th << ",beta_" << i + 1;
  for (int j = 0; j < s_max; ++j) th << ",gamma_" << j + 1;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < s_max; ++j) th << ",alpha_" << i + 1 << '_' << j + 1;
  }
  for (int j = 0; j < s_max; ++j) {
    for (int k = j + 1; k < s_max; ++k) th << ",tau_" << j + 1 << '_' << k + 1;
  }
  th << ",residual\n";
  const int n_numeric = s_max + r * s_max + s_max * (s_max - 1) / 2 + 1;

  nlohmann::json summary = out.header();
  summary["scales"] = nlohmann::json::array();
  for (std::size_t k = 0; k < scales.size(); ++k) {
    const Vector beta = scales[k] * direction;
    nlohmann::json at{{"scale", scales[k]}, {"betas", vector_to_json(beta)}};
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const int s = classes[c];
      const auto& sols = theory[k * classes.size() + c];
      int branch = 0;
      for (const auto& sol : sols) {
        if (!sol.valid) continue;
        th << num(scales[k]) << ',' << s << ',' << branch++ << ",valid";
        for (int i = 0; i < r; ++i) th << ',' << num(beta[i]);
        for (int j = 0; j < s_max; ++j) th << ',' << (j < s ? num(sol.gammas[j]) : "");
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < s_max; ++j) th << ',' << (j < s ? num(sol.R_uv(i, j)) : "");
        }
        for (int j = 0; j < s_max; ++j) {
          for (int m = j + 1; m < s_max; ++m) th << ',' << (m < s ? num(sol.R_vv(j, m)) : "");
        }
        th << ',' << num(sol.residual) << '\n';
      }
      if (branch == 0) {
        th << num(scales[k]) << ',' << s << ",,no valid solution";
        for (int i = 0; i < r; ++i) th << ',' << num(beta[i]);
        for (int q = 0; q < n_numeric; ++q) th << ',';
        th << '\n';
      }
      at["class_" + std::to_string(s)] = {{"valid", branch}, {"candidates", sols.size()}};
    }
    summary["scales"].push_back(std::move(at));
  }
  out.write_csv("theory.csv", th.str());

  std::ostringstream em;
  em << "scale,trial,seed,status,iterations,residual";
  for (int j = 0; j < cfg.s; ++j) em << ",gamma_hat_" << j + 1;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < cfg.s; ++j) em << ",alpha_hat_" << i + 1 << '_' << j + 1;
  }
  for (int j = 0; j < cfg.s; ++j) {
    for (int k = j + 1; k < cfg.s; ++k) em << ",tau_hat_" << j + 1 << '_' << k + 1;
  }
  em << '\n';
  int failed = 0;
  for (std::size_t idx = 0; idx < emp.size(); ++idx) {
    const Empirical& e = emp[idx];
    em << num(scales[idx / n_trials]) << ',' << idx % n_trials << ',' << e.seed << ',' << e.status << ','
       << e.iterations << ',' << num(e.residual);
    if (e.stats) {
      for (int j = 0; j < cfg.s; ++j) em << ',' << num(e.stats->gammas[j]);
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < cfg.s; ++j) em << ',' << num(e.stats->R_uv(i, j));
      }
      for (int j = 0; j < cfg.s; ++j) {
        for (int k = j + 1; k < cfg.s; ++k) em << ',' << num(e.stats->R_vv(j, k));
      }
    } else {
      ++failed;
      for (int q = 0; q < cfg.s + r * cfg.s + cfg.s * (cfg.s - 1) / 2; ++q) em << ',';
    }
    em << '\n';
  }
  out.write_csv("empirical.csv", em.str());
  summary["empirical_failed"] = failed;
  out.write_json("align.json", summary);
  return summary;
}

nlohmann::json cmd_estimate(const ExperimentConfig& cfg) {
  validate(cfg);
  require_init_fits(cfg);
  if (cfg.s != cfg.r) throw ConfigError({"s: estimation recovers all signals and needs s == r"});
  const Vector betas = config_betas(cfg);
  const int r = cfg.r;

  struct Row {
    std::uint64_t seed = 0;
    std::string status;
    std::string reason;
    Vector gammas;
    std::optional<PluginEstimate> est;
  };
  const auto n = static_cast<std::size_t>(cfg.n_trials);
  std::vector<Row> rows(n);
  parallel_for(n, cfg.threads, [&](std::size_t t) {
    Row& row = rows[t];
    row.seed = trial_seed(cfg, t);
    const SpikeModel model = make_model(cfg, betas, row.seed);
    const SymTensor tensor = build_spiked(model, cfg.noise);
    EstimateOptions o;
    o.critical = critical_options(cfg, row.seed);
    o.init = make_init(cfg, model, row.seed);
    o.plugin.n_starts = cfg.tolerances.n_starts;
    o.plugin.tol = cfg.tolerances.solver_tol;
    o.plugin.seed = row.seed;
    try {
      const EstimateOutcome res = estimate_from_tensor(tensor, r, o);
      row.gammas = res.critical.point.gammas;
      row.est = res.estimate;
      row.status = to_string(res.status);
      row.reason = res.reason;
    } catch (const NonconvergenceError& e) {
      row.status = "nonconverged";
      row.reason = e.what();
    } catch (const Error& e) {
      row.status = "failed";
      row.reason = e.what();
    }
  });

  Output out(cfg, "estimate");
  std::ostringstream csv;
  csv << "trial,seed,status";
  for (int j = 0; j < r; ++j) csv << ",gamma_hat_" << j + 1;
  for (int j = 0; j < r; ++j) csv << ",beta_hat_" << j + 1;
  csv << ",rho_hat,residual,objective\n";

  std::vector<double> gamma_err(static_cast<std::size_t>(r), 0.0);
  std::vector<double> beta_err(static_cast<std::size_t>(r), 0.0);
  int informative = 0, uninformative = 0, nonconverged = 0, failed = 0;
  nlohmann::json trials = nlohmann::json::array();
  for (std::size_t t = 0; t < n; ++t) {
    const Row& row = rows[t];
    csv << t << ',' << row.seed << ',' << row.status;
    for (int j = 0; j < r; ++j) csv << ',' << (row.gammas.size() ? num(row.gammas[j]) : "");
    for (int j = 0; j < r; ++j) csv << ',' << (row.est ? num(row.est->betas_hat[j]) : "");
    csv << ',' << (row.est && r == 2 ? num(row.est->rho_hat()) : "");
    csv << ',' << (row.est ? num(row.est->residual) : "") << ',' << (row.est ? num(row.est->objective) : "") << '\n';

    nlohmann::json tj{{"trial", t}, {"seed", row.seed}, {"status", row.status}};
    if (!row.reason.empty()) tj["reason"] = row.reason;
    if (row.gammas.size()) tj["gammas"] = vector_to_json(row.gammas);
    if (row.est) tj["estimate"] = estimate_to_json(*row.est);
    trials.push_back(std::move(tj));

    if (row.status == "nonconverged") {
      ++nonconverged;
    } else if (row.status == "failed") {
      ++failed;
    } else if (!row.est) {
      ++uninformative;
    } else {
      ++informative;
      for (int j = 0; j < r; ++j) {
        gamma_err[static_cast<std::size_t>(j)] += std::abs(row.gammas[j] - betas[j]);
        beta_err[static_cast<std::size_t>(j)] += std::abs(row.est->betas_hat[j] - betas[j]);
      }
    }
  }
  out.write_csv("estimates.csv", csv.str());

  nlohmann::json j = out.header();
  j["counts"] = {{"trials", n},
                 {"informative", informative},
                 {"uninformative", uninformative},
                 {"nonconverged", nonconverged},
                 {"failed", failed}};
  // Errors are averaged over informative trials only, so both columns see the same seeds.
  nlohmann::json bias = nlohmann::json::array();
  for (int k = 0; k < r; ++k) {
    nlohmann::json b{{"index", k + 1}, {"beta", betas[k]}};
    if (informative > 0) {
      const double ge = gamma_err[static_cast<std::size_t>(k)] / informative;
      const double be = beta_err[static_cast<std::size_t>(k)] / informative;
      b["mean_abs_gamma_error"] = ge;
      b["mean_abs_beta_hat_error"] = be;
      b["debiased"] = be < ge;
    } else {
      b["mean_abs_gamma_error"] = nullptr;
      b["mean_abs_beta_hat_error"] = nullptr;
      b["debiased"] = nullptr;
    }
    bias.push_back(std::move(b));
  }
  j["bias"] = std::move(bias);
  j["trials"] = std::move(trials);
  out.write_json("summary.json", j);
  return j;
}

nlohmann::json cmd_critical(const ExperimentConfig& cfg) {
  validate(cfg);
  require_init_fits(cfg);
  const std::uint64_t seed = trial_seed(cfg, 0);
  const SpikeModel model = make_model(cfg, config_betas(cfg), seed);
  const SymTensor tensor = build_spiked(model, cfg.noise);
  const CriticalResult res = find_critical_points(tensor, cfg.s, make_init(cfg, model, seed), critical_options(cfg, seed));

  Output out(cfg, "critical");
  nlohmann::json j = out.header();
  j["trial_seed"] = seed;
  j["critical_point"] = critical_to_json(res, cfg.d, seed, true);
  const SummaryStats st = summary_statistics(res.point, model);
  j["summary"] = {{"R_uv", matrix_to_json(st.R_uv)}, {"R_vv", matrix_to_json(st.R_vv)}, {"R_uu", matrix_to_json(st.R_uu)}};
  out.write_json("critical.json", j);

  std::ostringstream trace;
  trace << "iteration,residual\n";
  for (std::size_t k = 0; k < res.report.trace.size(); ++k) trace << k + 1 << ',' << num(res.report.trace[k]) << '\n';
  out.write_csv("trace.csv", trace.str());
  return j;
}

}  // namespace spiked::cli
