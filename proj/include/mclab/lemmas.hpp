#pragma once

// Property suite for the algebra behind the rank test function: symmetric-function
// oracles, derivative formulas, the regrouping identity, remainder asymptotics near a
// minimal-rank point, the C^{1,1} probe, Newton–MacLaurin and third-derivative ratios.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mclab::lemmas {

/// Deliberate faults for checking that the suite can fail.
enum class Mutation {
  None,
  QHessDiagonalSign,  ///< flips q^{ii,ii}
};

struct Options {
  std::uint64_t seed = 0;
  /// Multiplies every default sample count.
  double sample_scale = 1.0;
  Mutation mutation = Mutation::None;
};

struct Result {
  std::string name;
  bool pass = false;
  std::size_t samples = 0;
  std::vector<std::pair<std::string, double>> metrics{};
  std::vector<std::pair<std::string, double>> tolerances{};
  std::string note{};

  [[nodiscard]] double metric(std::string_view key) const;
};

/// elem_sym, q_derivatives, identity_id1, asymptotics, c11_probe, newton_maclaurin, third_bound.
[[nodiscard]] const std::vector<std::string>& names();

/// Throws std::invalid_argument for an unknown name.
[[nodiscard]] Result run(std::string_view name, const Options& options = {});

[[nodiscard]] Mutation parse_mutation(std::string_view text);

}  // namespace mclab::lemmas
