#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace v2vprop::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Full-string decimal parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Shortest representation that round-trips to the same double.
std::string format_double(double v);

}  // namespace v2vprop::text
