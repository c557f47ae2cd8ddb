#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfade::text {

/// Splits one comma-delimited line. Quoting is not supported; fields
/// may not contain commas.
std::vector<std::string> split_fields(std::string_view line, char delim = ',');

/// Reads all lines of a UTF-8 text file, stripping trailing '\r'.
/// Throws ValidationError when the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes content atomically enough for our purposes (truncate + write).
void write_file(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

/// Fixed-point rendering with the given number of decimals.
std::string format_fixed(double value, int decimals);

/// Rendering with the given number of significant digits.
std::string format_significant(double value, int digits);

/// Parses a full-field decimal number; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view field);

}  // namespace cfade::text
