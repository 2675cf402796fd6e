#pragma once

#include <string>

namespace taxo::text {

// ASCII-only case fold; multi-byte UTF-8 sequences pass through untouched.
std::string ascii_lower(std::string s);

// Trims and collapses internal whitespace runs to single spaces.
std::string collapse_ws(const std::string& s);

bool is_ascii_space(char c);

}  // namespace taxo::text
