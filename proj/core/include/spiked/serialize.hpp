#pragma once

// JSON views of the library's result types and the 17-significant-digit
// formatting used for CSV output.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "spiked/alignments.hpp"
#include "spiked/critical.hpp"
#include "spiked/inference.hpp"
#include "spiked/spectrum.hpp"

namespace spiked {

std::string format_double(double x);

nlohmann::json vector_to_json(const Vector& v);
// Row-major nested arrays.
nlohmann::json matrix_to_json(const Matrix& m);
Vector vector_from_json(const nlohmann::json& j);
Matrix matrix_from_json(const nlohmann::json& j);

// {d, N, r, gammas, vs, residual, iterations, converged, restarts, trace, seed}
nlohmann::json critical_to_json(const CriticalResult& res, int d, std::uint64_t seed, bool with_trace = true);
CriticalPoint critical_point_from_json(const nlohmann::json& j);

nlohmann::json alignment_to_json(const AlignmentSolution& sol);
nlohmann::json estimate_to_json(const PluginEstimate& est);
nlohmann::json spectral_limit_to_json(const SpectralLimit& lim);

}  // namespace spiked
