#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tailcast::csv {

// Comma-separated, no quoting (none of the formats here carry commas in fields).
std::vector<std::string> split(std::string_view line);

std::vector<std::string> read_lines(const std::filesystem::path& path);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

std::optional<double> parse_double(std::string_view s);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace tailcast::csv
