#pragma once

// Batch driver behind the mclab executable: JSON scenarios in, JSON reports and CSV /
// binary series out.

#include "mclab/flows.hpp"
#include "mclab/gridfield.hpp"
#include "mclab/operator.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace mclab::cli {

enum ExitCode : int {
  kPass = 0,
  kUsage = 1,         ///< bad arguments, malformed config, IO failure
  kFinding = 2,       ///< a checked property fails
  kInconclusive = 3,
  kRuntime = 4,       ///< a flow or computation broke down
};

struct RunConfig {
  std::string subcommand;
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;  ///< overrides the scenario's "seed"
  std::filesystem::path out = ".";
  std::map<std::string, double> tolerances;  ///< overrides the scenario's "tolerances"
};

/// Dispatches on config.subcommand. Diagnostics go to `err`, one summary line to `log`.
[[nodiscard]] int run(const RunConfig& config, std::ostream& log, std::ostream& err);

// Scenario building blocks, exposed for tests.

/// {"name": "sigma_k", "n", "k"}, {"name": "sigma_quotient", "n", "l", "k"},
/// {"expression", "n"}, {"name": "shift", "of", "by" | "identity"},
/// {"name": "composition", "g", "of"}, {"name": "harmonic_reciprocal", "a", "f"}, or a
/// string "sigma_K" / "sigma_L/sigma_K" with the dimension taken from `n`.
[[nodiscard]] opcheck::OperatorSpec make_operator(const nlohmann::json& spec, int n = 0);

/// {"rank", "n", "lo", "hi", "periodic"} for cubes or {"dims", "lo", "hi", "periodic"} with
/// per-axis arrays.
[[nodiscard]] grid::Grid make_grid(const nlohmann::json& spec);

/// {"expression"} sampled on `grid`, or {"file"} (.csv or .mclb) relative to `base`.
[[nodiscard]] grid::ScalarField make_field(const nlohmann::json& spec, const std::optional<grid::Grid>& grid,
                                           const std::filesystem::path& base);

/// {"shape": "ellipse" | "circle", "a", "b" | "r", "vertices", "center"} or {"points"}.
[[nodiscard]] flows::PlaneCurve make_curve(const nlohmann::json& spec);

/// FNV-1a over the canonical serialization of the scenario.
[[nodiscard]] std::string config_hash(const nlohmann::json& scenario);

}  // namespace mclab::cli
