#pragma once

// Subcommands of the `spiked` tool. Each writes its files into
// cfg.output_dir (created if missing) and returns the JSON summary it wrote.
//
// Files, all prefixed by a "# spiked-tensor <version> command=... config_hash=... seed=..." line when CSV:
//   spectrum  eigenvalues.csv   trial,seed,index,eigenvalue
//             limit_density.csv x,density,cdf
//             ks.json
//   align     theory.csv        scale,class,branch,status,beta_i,gamma_j,alpha_i_j,tau_j_k,residual
//             empirical.csv     scale,trial,seed,status,iterations,residual,gamma_hat_j,alpha_hat_i_j,tau_hat_j_k
//             align.json
//   estimate  estimates.csv     trial,seed,status,gamma_hat_j,beta_hat_j,rho_hat,residual,objective
//             summary.json
//   critical  critical.json, trace.csv (iteration,residual)

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "spiked/cli/config.hpp"

namespace spiked::cli {

// Output could not be written. Exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version();

nlohmann::json cmd_spectrum(const ExperimentConfig& cfg);
nlohmann::json cmd_align(const ExperimentConfig& cfg);
nlohmann::json cmd_estimate(const ExperimentConfig& cfg);
nlohmann::json cmd_critical(const ExperimentConfig& cfg);

// Full command line entry point. Exit codes: 0 success, 1 IO failure,
// 2 configuration error, 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spiked::cli
