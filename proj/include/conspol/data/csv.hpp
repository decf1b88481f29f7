#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "conspol/data/dataset.hpp"

namespace conspol {

/// Header `x0..x{d-1},action,reward`; missing cells are empty.
std::string dataset_csv(const LoggedDataset& data);
/// Ground-truth companion: complete features, label, reward means mu_a,
/// logging probabilities pi_a and realized potential outcomes po_a when present.
std::string truth_csv(const LoggedDataset& data);
/// Schema sidecar {"schema": ..., "num_actions": k}.
std::string schema_json(const LoggedDataset& data);

/// Parses a dataset CSV. Empty cells and `NA` are missing. Without a schema
/// every attribute is continuous with mean/std estimated from the observed
/// cells; without num_actions the count is max(action) + 1.
LoggedDataset parse_dataset_csv(std::string_view text, std::optional<FeatureSchema> schema = std::nullopt,
                                std::optional<std::size_t> num_actions = std::nullopt);
/// Features only: header `x0..x{d-1}`, optionally followed by
/// `action,reward` (ignored). Empty cells and `NA` are missing.
std::vector<PartialFeature> parse_feature_csv(std::string_view text, const FeatureSchema& schema);
/// Parses a truth companion for a dataset that has already been read.
GroundTruth parse_truth_csv(std::string_view text, const LoggedDataset& data);

std::filesystem::path truth_path(const std::filesystem::path& dataset);
std::filesystem::path schema_path(const std::filesystem::path& dataset);

/// Writes the dataset, its schema sidecar and (if present) truth companion.
void save_dataset(const std::filesystem::path& path, const LoggedDataset& data);
/// Reads a dataset with its sidecar and truth companion when they exist.
LoggedDataset load_dataset(const std::filesystem::path& path);

}  // namespace conspol
