#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "conspol/common.hpp"

namespace conspol {

enum class AttributeType { Continuous, Categorical };

/// One attribute of the feature space. Continuous attributes carry the
/// normalization used internally by the networks; categorical attributes
/// take integer values 0..cardinality-1 stored as doubles.
struct AttributeKind {
  AttributeType type = AttributeType::Continuous;
  double mean = 0.0;
  double std = 1.0;
  std::size_t cardinality = 0;

  static AttributeKind continuous(double mean = 0.0, double std = 1.0);
  static AttributeKind categorical(std::size_t cardinality);

  bool is_continuous() const { return type == AttributeType::Continuous; }
  /// Decoder outputs used by this attribute: (mu, raw sigma) or m logits.
  std::size_t head_width() const { return is_continuous() ? 2 : cardinality; }

  friend bool operator==(const AttributeKind&, const AttributeKind&) = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<AttributeKind> attributes);

  std::size_t size() const { return attributes_.size(); }
  const AttributeKind& operator[](std::size_t j) const { return attributes_[j]; }
  const std::vector<AttributeKind>& attributes() const { return attributes_; }
  std::size_t continuous_count() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<AttributeKind> attributes_;
};

/// A complete feature: one value per attribute.
using Feature = Vector;

/// Attribute values plus missingness mask (1 = missing). Values at masked
/// positions carry no information and are ignored everywhere.
struct PartialFeature {
  Vector values;
  std::vector<std::uint8_t> missing;

  static PartialFeature complete(Feature x);

  std::size_t size() const { return values.size(); }
  bool is_missing(std::size_t j) const { return missing[j] != 0; }
  std::size_t missing_count() const;
  std::size_t observed_count() const { return size() - missing_count(); }

  friend bool operator==(const PartialFeature&, const PartialFeature&) = default;
};

/// Throws ShapeError when the feature does not fit the schema.
void validate_feature(const FeatureSchema& schema, const PartialFeature& xt);
void validate_feature(const FeatureSchema& schema, std::span<const double> x);

/// Copies observed attributes of xt onto x.
Feature overlay_observed(Feature x, const PartialFeature& xt);

void to_json(nlohmann::json& j, const FeatureSchema& schema);
void from_json(const nlohmann::json& j, FeatureSchema& schema);

}  // namespace conspol
