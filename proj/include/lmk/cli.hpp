#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lmk::cli {

inline constexpr const char* kVersion = "lmk 0.1.0";

// Exit codes: 0 ok, 1 data/model error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace lmk::cli
