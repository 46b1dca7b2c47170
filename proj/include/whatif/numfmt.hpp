#pragma once

#include <string>
#include <string_view>

namespace whatif {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);

/// Parses a full token as a double (accepts inf/nan); throws ConfigError otherwise.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string_view trim(std::string_view s);

}  // namespace whatif
