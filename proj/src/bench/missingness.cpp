#include "conspol/bench/missingness.hpp"

#include <cmath>

#include "conspol/nn/distributions.hpp"

namespace conspol {

void to_json(nlohmann::json& j, const MissingnessSpec& s) {
  j = {{"kind", s.kind == MissingKind::Mcar ? "mcar" : "mar"}, {"rate", s.rate}, {"slope", s.slope}};
  if (s.anchor) j["anchor"] = *s.anchor;
}

void from_json(const nlohmann::json& j, MissingnessSpec& s) {
  MissingnessSpec o;
  const auto kind = j.value("kind", std::string("mcar"));
  if (kind == "mcar") {
    o.kind = MissingKind::Mcar;
  } else if (kind == "mar") {
    o.kind = MissingKind::Mar;
  } else {
    throw ConfigError("kind: unknown missingness mechanism '" + kind + "'");
  }
  o.rate = j.value("rate", o.rate);
  o.slope = j.value("slope", o.slope);
  if (j.contains("anchor")) o.anchor = j.at("anchor").get<std::size_t>();
  s = o;
}

LoggedDataset inject_missingness(const LoggedDataset& data, const MissingnessSpec& spec, Rng& rng) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) throw ConfigError("rate must lie in [0, 1)");
  const std::size_t d = data.schema.size();
  if (spec.kind == MissingKind::Mar) {
    if (!spec.anchor) throw ConfigError("anchor: MAR missingness needs an always-observed anchor attribute");
    if (*spec.anchor >= d) throw ConfigError("anchor: attribute index out of range");
  }
  LoggedDataset out = data;
  const double base = spec.rate > 0.0 ? std::log(spec.rate / (1.0 - spec.rate)) : 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    PartialFeature xt = data.truth ? PartialFeature::complete(data.truth->complete[i]) : data.features[i];
    if (spec.rate <= 0.0) {
      out.features[i] = xt;
      continue;
    }
    double shift = 0.0;
    if (spec.kind == MissingKind::Mar) {
      const std::size_t k = *spec.anchor;
      if (xt.is_missing(k)) throw DataError("row " + std::to_string(i) + ": MAR anchor attribute is missing");
      const auto& attr = data.schema[k];
      const double a = attr.is_continuous() ? (xt.values[k] - attr.mean) / attr.std
                                            : xt.values[k] - 0.5 * static_cast<double>(attr.cardinality - 1);
      shift = spec.slope * a;
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (spec.kind == MissingKind::Mar && j == *spec.anchor) continue;
      const double p = spec.kind == MissingKind::Mcar ? spec.rate : nn::sigmoid(base + shift);
      if (uniform01(rng) < p) {
        xt.missing[j] = 1;
        xt.values[j] = 0.0;
      }
    }
    out.features[i] = std::move(xt);
  }
  return out;
}

}  // namespace conspol
