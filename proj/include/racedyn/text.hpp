#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace racedyn {

/// Shortest decimal form that round-trips, locale independent ("." decimal).
std::string format_real(double value);

/// Parses the whole of `text` (surrounding blanks ignored) as a real number.
std::optional<double> parse_real(std::string_view text);

std::string_view trim(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

}  // namespace racedyn
