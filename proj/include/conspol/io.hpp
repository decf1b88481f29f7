#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace conspol {

/// Shortest round-trip text for a double ("%.17g").
std::string format_double(double v);

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file. Throws DataError on I/O failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Splits one CSV line on commas and trims surrounding whitespace.
std::vector<std::string> split_csv_line(std::string_view line);
/// Lines of a text file without trailing '\r'; blank lines dropped.
std::vector<std::string> split_lines(std::string_view text);

}  // namespace conspol
