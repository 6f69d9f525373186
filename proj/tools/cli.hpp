#pragma once

#include <ostream>

namespace clab::cli {

// Entry point of the clab tool. Exit codes: 0 ok, 1 a check failed, 2 bad
// configuration or input.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clab::cli
