#include "conspol/pvae/feature.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace conspol {

AttributeKind AttributeKind::continuous(double mean, double std) {
  AttributeKind k;
  k.type = AttributeType::Continuous;
  k.mean = mean;
  k.std = std;
  return k;
}

AttributeKind AttributeKind::categorical(std::size_t cardinality) {
  AttributeKind k;
  k.type = AttributeType::Categorical;
  k.cardinality = cardinality;
  return k;
}

FeatureSchema::FeatureSchema(std::vector<AttributeKind> attributes) : attributes_(std::move(attributes)) {
  for (std::size_t j = 0; j < attributes_.size(); ++j) {
    const auto& a = attributes_[j];
    if (a.is_continuous()) {
      if (!(a.std > 0.0) || !std::isfinite(a.std) || !std::isfinite(a.mean)) {
        throw ConfigError("attribute " + std::to_string(j) + ": normalization std must be finite and > 0");
      }
    } else if (a.cardinality < 2) {
      throw ConfigError("attribute " + std::to_string(j) + ": categorical cardinality must be >= 2");
    }
  }
}

std::size_t FeatureSchema::continuous_count() const {
  return static_cast<std::size_t>(
      std::count_if(attributes_.begin(), attributes_.end(), [](const auto& a) { return a.is_continuous(); }));
}

PartialFeature PartialFeature::complete(Feature x) {
  PartialFeature f;
  f.missing.assign(x.size(), 0);
  f.values = std::move(x);
  return f;
}

std::size_t PartialFeature::missing_count() const {
  return static_cast<std::size_t>(std::count_if(missing.begin(), missing.end(), [](auto m) { return m != 0; }));
}

namespace {

void check_value(const FeatureSchema& schema, std::size_t j, double v) {
  const auto& a = schema[j];
  if (!std::isfinite(v)) throw ShapeError("attribute " + std::to_string(j) + " is not finite");
  if (!a.is_continuous()) {
    if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(a.cardinality)) {
      throw ShapeError("attribute " + std::to_string(j) + ": category " + std::to_string(v) +
                       " outside 0.." + std::to_string(a.cardinality - 1));
    }
  }
}

}  // namespace

void validate_feature(const FeatureSchema& schema, const PartialFeature& xt) {
  if (xt.values.size() != schema.size() || xt.missing.size() != schema.size()) {
    throw ShapeError("feature has " + std::to_string(xt.values.size()) + " values / " +
                     std::to_string(xt.missing.size()) + " mask entries; schema has " +
                     std::to_string(schema.size()) + " attributes");
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (!xt.is_missing(j)) check_value(schema, j, xt.values[j]);
  }
}

void validate_feature(const FeatureSchema& schema, std::span<const double> x) {
  if (x.size() != schema.size()) {
    throw ShapeError("feature has " + std::to_string(x.size()) + " values; schema has " +
                     std::to_string(schema.size()));
  }
  for (std::size_t j = 0; j < schema.size(); ++j) check_value(schema, j, x[j]);
}

Feature overlay_observed(Feature x, const PartialFeature& xt) {
  for (std::size_t j = 0; j < xt.size(); ++j) {
    if (!xt.is_missing(j)) x[j] = xt.values[j];
  }
  return x;
}

void to_json(nlohmann::json& j, const FeatureSchema& schema) {
  j = nlohmann::json::array();
  for (const auto& a : schema.attributes()) {
    if (a.is_continuous()) {
      j.push_back({{"type", "continuous"}, {"mean", a.mean}, {"std", a.std}});
    } else {
      j.push_back({{"type", "categorical"}, {"cardinality", a.cardinality}});
    }
  }
}

void from_json(const nlohmann::json& j, FeatureSchema& schema) {
  std::vector<AttributeKind> attrs;
  for (const auto& aj : j) {
    const auto type = aj.at("type").get<std::string>();
    if (type == "continuous") {
      attrs.push_back(AttributeKind::continuous(aj.at("mean").get<double>(), aj.at("std").get<double>()));
    } else if (type == "categorical") {
      attrs.push_back(AttributeKind::categorical(aj.at("cardinality").get<std::size_t>()));
    } else {
      throw DataError("unknown attribute type '" + type + "'");
    }
  }
  schema = FeatureSchema(std::move(attrs));
}

}  // namespace conspol
