#pragma once

// Minimal CSV helpers shared by the demand, trajectory and record files.
// Numbers are written in shortest round-trip form so a write/read cycle is
// bit-exact.

#include <string>
#include <string_view>
#include <vector>

namespace ctms::csv {

[[nodiscard]] std::string format_number(double value);

/// Parses a full field as a double; throws IoError on trailing garbage.
[[nodiscard]] double parse_number(std::string_view field);

[[nodiscard]] std::vector<std::string_view> split(std::string_view line, char sep = ',');

[[nodiscard]] std::string join(const std::vector<std::string>& fields, char sep = ',');

}  // namespace ctms::csv
