#pragma once

#include <string>
#include <string_view>

namespace lkemu {

// Shortest text that parses back to the same double.
std::string format_number(double value);

// Throws an io error naming `what` if the text is not a complete number.
double parse_number(std::string_view text, std::string_view what = "number");

}  // namespace lkemu
