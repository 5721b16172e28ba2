#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace semilab::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 2 usage, 3 model or validation error, 4 numerical
// failure or I/O. Errors go to `err` as one JSON line {"error", "kind"}.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(std::string_view bytes);

}  // namespace semilab::cli
