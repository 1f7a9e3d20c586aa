#include "spiked/serialize.hpp"

#include <cstdio>

#include "spiked/errors.hpp"

namespace spiked {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json vector_to_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_to_json(m.row(i).transpose()));
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidArgument("expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument("expected a JSON array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw InvalidArgument("expected a nonempty JSON array of rows");
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from_json(j[i]);
    if (static_cast<std::size_t>(row.size()) != cols) throw InvalidArgument("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

nlohmann::json critical_to_json(const CriticalResult& res, int d, std::uint64_t seed, bool with_trace) {
  const auto& cp = res.point;
  nlohmann::json j;
  j["d"] = d;
  j["N"] = cp.dim();
  j["r"] = cp.rank();
  j["gammas"] = vector_to_json(cp.gammas);
  // One array per vector v_i.
  j["vs"] = matrix_to_json(cp.vs.transpose());
  j["residual"] = res.report.residual;
  j["iterations"] = res.report.iterations;
  j["converged"] = res.report.converged;
  j["status"] = res.report.converged ? "converged" : "nonconverged";
  j["restarts"] = res.report.restarts;
  j["perturbations"] = res.report.perturbations;
  j["seed"] = seed;
  if (with_trace) j["trace"] = res.report.trace;
  return j;
}

CriticalPoint critical_point_from_json(const nlohmann::json& j) {
  CriticalPoint cp;
  cp.gammas = vector_from_json(j.at("gammas"));
  cp.vs = matrix_from_json(j.at("vs")).transpose();
  if (cp.vs.cols() != cp.gammas.size()) throw DimensionError("gammas and vs disagree in count");
  return cp;
}

nlohmann::json alignment_to_json(const AlignmentSolution& sol) {
  nlohmann::json j;
  j["gammas"] = vector_to_json(sol.gammas);
  j["R_uv"] = matrix_to_json(sol.R_uv);
  j["R_vv"] = matrix_to_json(sol.R_vv);
  j["residual"] = sol.residual;
  j["valid"] = sol.valid;
  j["kappas"] = vector_to_json(sol.kappas);
  return j;
}

nlohmann::json estimate_to_json(const PluginEstimate& est) {
  nlohmann::json j;
  j["betas_hat"] = vector_to_json(est.betas_hat);
  if (est.R_uu_hat.rows() == 2) j["rho_hat"] = est.rho_hat();
  j["R_uu_hat"] = matrix_to_json(est.R_uu_hat);
  j["R_uv_hat"] = matrix_to_json(est.R_uv_hat);
  j["residual"] = est.residual;
  j["objective"] = est.objective;
  j["valid"] = est.valid;
  return j;
}

nlohmann::json spectral_limit_to_json(const SpectralLimit& lim) {
  nlohmann::json j;
  j["d"] = lim.d;
  j["kappas"] = vector_to_json(lim.kappas);
  j["P"] = matrix_to_json(lim.P);
  j["W"] = matrix_to_json(lim.W);
  return j;
}

}  // namespace spiked
