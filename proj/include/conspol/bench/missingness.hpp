#pragma once

#include <cstddef>
#include <optional>

#include "json.hpp"

#include "conspol/common.hpp"
#include "conspol/data/dataset.hpp"

namespace conspol {

enum class MissingKind { Mcar, Mar };

/// MCAR: each cell erased independently with probability `rate`.
/// MAR: attribute j (j != anchor) is erased with probability
/// sigmoid(logit(rate) + slope * a), a the standardized anchor value; the
/// anchor itself is never erased.
struct MissingnessSpec {
  MissingKind kind = MissingKind::Mcar;
  double rate = 0.0;
  std::optional<std::size_t> anchor;
  double slope = 2.0;
};

void to_json(nlohmann::json& j, const MissingnessSpec& s);
void from_json(const nlohmann::json& j, MissingnessSpec& s);

/// Re-masks a dataset. Values come from the ground-truth complete features
/// when present, otherwise from the observed cells (already-missing cells
/// stay missing).
LoggedDataset inject_missingness(const LoggedDataset& data, const MissingnessSpec& spec, Rng& rng);

}  // namespace conspol
