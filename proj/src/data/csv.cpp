#include "conspol/data/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>

#include "json.hpp"

#include "conspol/io.hpp"

namespace conspol {
namespace {

std::string row_label(std::size_t line) { return "line " + std::to_string(line + 1); }

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v)) {
    throw DataError(row_label(line) + ", column " + column + ": not a finite number: '" + cell + "'");
  }
  return v;
}

bool is_missing_cell(const std::string& cell) { return cell.empty() || cell == "NA"; }

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out += ',';
    out += cells[k];
  }
  out += '\n';
}

}  // namespace

std::string dataset_csv(const LoggedDataset& data) {
  data.validate();
  const std::size_t d = data.schema.size();
  std::string out;
  std::vector<std::string> cells;
  for (std::size_t j = 0; j < d; ++j) cells.push_back("x" + std::to_string(j));
  cells.push_back("action");
  cells.push_back("reward");
  append_row(out, cells);
  for (std::size_t i = 0; i < data.size(); ++i) {
    cells.clear();
    const auto& xt = data.features[i];
    for (std::size_t j = 0; j < d; ++j) cells.push_back(xt.is_missing(j) ? std::string() : format_double(xt.values[j]));
    cells.push_back(std::to_string(data.actions[i]));
    cells.push_back(format_double(data.rewards[i]));
    append_row(out, cells);
  }
  return out;
}

std::string truth_csv(const LoggedDataset& data) {
  if (!data.truth) throw DataError("dataset has no ground truth to write");
  const auto& t = *data.truth;
  const std::size_t d = data.schema.size();
  const std::size_t k = data.num_actions;
  const bool po = t.potential_outcomes.rows() == data.size() && data.size() > 0;
  std::string out;
  std::vector<std::string> cells;
  for (std::size_t j = 0; j < d; ++j) cells.push_back("x" + std::to_string(j));
  cells.push_back("label");
  for (std::size_t a = 0; a < k; ++a) cells.push_back("mu" + std::to_string(a));
  for (std::size_t a = 0; a < k; ++a) cells.push_back("pi" + std::to_string(a));
  if (po) {
    for (std::size_t a = 0; a < k; ++a) cells.push_back("po" + std::to_string(a));
  }
  append_row(out, cells);
  for (std::size_t i = 0; i < data.size(); ++i) {
    cells.clear();
    for (std::size_t j = 0; j < d; ++j) cells.push_back(format_double(t.complete[i][j]));
    cells.push_back(std::to_string(t.labels[i]));
    for (std::size_t a = 0; a < k; ++a) cells.push_back(format_double(t.reward_means(i, a)));
    for (std::size_t a = 0; a < k; ++a) cells.push_back(format_double(t.logging(i, a)));
    if (po) {
      for (std::size_t a = 0; a < k; ++a) cells.push_back(format_double(t.potential_outcomes(i, a)));
    }
    append_row(out, cells);
  }
  return out;
}

std::string schema_json(const LoggedDataset& data) {
  nlohmann::json j = {{"schema", data.schema}, {"num_actions", data.num_actions}};
  return j.dump(2) + "\n";
}

LoggedDataset parse_dataset_csv(std::string_view text, std::optional<FeatureSchema> schema,
                                std::optional<std::size_t> num_actions) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("dataset CSV is empty");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[header.size() - 2] != "action" || header.back() != "reward") {
    throw DataError("dataset CSV header must end with 'action,reward'");
  }
  const std::size_t d = header.size() - 2;
  if (schema && schema->size() != d) {
    throw DataError("dataset has " + std::to_string(d) + " attributes but the schema has " +
                    std::to_string(schema->size()));
  }
  LoggedDataset data;
  std::size_t max_action = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_csv_line(lines[li]);
    if (cells.size() != header.size()) {
      throw DataError(row_label(li) + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    PartialFeature xt;
    xt.values.assign(d, 0.0);
    xt.missing.assign(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
      if (is_missing_cell(cells[j])) {
        xt.missing[j] = 1;
      } else {
        xt.values[j] = parse_number(cells[j], li, header[j]);
      }
    }
    const double a = parse_number(cells[d], li, "action");
    if (a < 0.0 || a != std::floor(a)) throw DataError(row_label(li) + ", column action: not a non-negative integer");
    const auto action = static_cast<std::size_t>(a);
    max_action = std::max(max_action, action);
    data.features.push_back(std::move(xt));
    data.actions.push_back(action);
    data.rewards.push_back(parse_number(cells[d + 1], li, "reward"));
  }
  if (data.features.empty()) throw DataError("dataset CSV has no rows");
  if (schema) {
    data.schema = *schema;
  } else {
    std::vector<AttributeKind> attrs;
    for (std::size_t j = 0; j < d; ++j) {
      double sum = 0.0, sq = 0.0;
      std::size_t count = 0;
      for (const auto& xt : data.features) {
        if (xt.is_missing(j)) continue;
        sum += xt.values[j];
        sq += xt.values[j] * xt.values[j];
        ++count;
      }
      const double mean = count ? sum / static_cast<double>(count) : 0.0;
      const double var = count ? sq / static_cast<double>(count) - mean * mean : 0.0;
      attrs.push_back(AttributeKind::continuous(mean, var > 1e-12 ? std::sqrt(var) : 1.0));
    }
    data.schema = FeatureSchema(std::move(attrs));
  }
  data.num_actions = num_actions ? *num_actions : max_action + 1;
  data.validate();
  return data;
}

std::vector<PartialFeature> parse_feature_csv(std::string_view text, const FeatureSchema& schema) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("feature CSV is empty");
  const auto header = split_csv_line(lines[0]);
  const std::size_t d = schema.size();
  const bool logged = header.size() == d + 2 && header[d] == "action" && header[d + 1] == "reward";
  if (header.size() != d && !logged) {
    throw DataError("feature CSV has " + std::to_string(header.size()) + " columns, the schema has " +
                    std::to_string(d) + " attributes");
  }
  std::vector<PartialFeature> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_csv_line(lines[li]);
    if (cells.size() != header.size()) throw DataError(row_label(li) + ": wrong number of cells");
    PartialFeature xt{Vector(d, 0.0), std::vector<std::uint8_t>(d, 0)};
    for (std::size_t j = 0; j < d; ++j) {
      if (is_missing_cell(cells[j])) xt.missing[j] = 1;
      else xt.values[j] = parse_number(cells[j], li, header[j]);
    }
    validate_feature(schema, xt);
    out.push_back(std::move(xt));
  }
  if (out.empty()) throw DataError("feature CSV has no rows");
  return out;
}

GroundTruth parse_truth_csv(std::string_view text, const LoggedDataset& data) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("truth CSV is empty");
  const std::size_t d = data.schema.size();
  const std::size_t k = data.num_actions;
  const auto header = split_csv_line(lines[0]);
  const std::size_t base = d + 1 + 2 * k;
  if (header.size() != base && header.size() != base + k) {
    throw DataError("truth CSV has " + std::to_string(header.size()) + " columns, expected " + std::to_string(base) +
                    " or " + std::to_string(base + k));
  }
  const bool po = header.size() == base + k;
  if (lines.size() - 1 != data.size()) throw DataError("truth CSV row count does not match the dataset");
  GroundTruth t;
  t.reward_means = nn::Matrix(data.size(), k);
  t.logging = nn::Matrix(data.size(), k);
  if (po) t.potential_outcomes = nn::Matrix(data.size(), k);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_csv_line(lines[li]);
    if (cells.size() != header.size()) throw DataError(row_label(li) + ": wrong number of truth cells");
    const std::size_t i = li - 1;
    Feature x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = parse_number(cells[j], li, header[j]);
    t.complete.push_back(std::move(x));
    t.labels.push_back(static_cast<int>(parse_number(cells[d], li, "label")));
    for (std::size_t a = 0; a < k; ++a) {
      t.reward_means(i, a) = parse_number(cells[d + 1 + a], li, header[d + 1 + a]);
      t.logging(i, a) = parse_number(cells[d + 1 + k + a], li, header[d + 1 + k + a]);
      if (po) t.potential_outcomes(i, a) = parse_number(cells[base + a], li, header[base + a]);
    }
  }
  return t;
}

std::filesystem::path truth_path(const std::filesystem::path& dataset) {
  auto p = dataset;
  p.replace_filename(dataset.stem().string() + "_truth" + dataset.extension().string());
  return p;
}

std::filesystem::path schema_path(const std::filesystem::path& dataset) {
  auto p = dataset;
  p.replace_filename(dataset.stem().string() + ".schema.json");
  return p;
}

void save_dataset(const std::filesystem::path& path, const LoggedDataset& data) {
  write_file_atomic(path, dataset_csv(data));
  write_file_atomic(schema_path(path), schema_json(data));
  if (data.truth) write_file_atomic(truth_path(path), truth_csv(data));
}

LoggedDataset load_dataset(const std::filesystem::path& path) {
  std::optional<FeatureSchema> schema;
  std::optional<std::size_t> num_actions;
  const auto sp = schema_path(path);
  if (std::filesystem::exists(sp)) {
    try {
      const auto j = nlohmann::json::parse(read_file(sp));
      schema = j.at("schema").get<FeatureSchema>();
      if (j.contains("num_actions")) num_actions = j.at("num_actions").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(sp.string() + ": " + e.what());
    }
  }
  auto data = parse_dataset_csv(read_file(path), schema, num_actions);
  const auto tp = truth_path(path);
  if (std::filesystem::exists(tp)) {
    data.truth = parse_truth_csv(read_file(tp), data);
    data.validate();
  }
  return data;
}

}  // namespace conspol
