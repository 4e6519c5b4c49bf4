#pragma once

#include <iosfwd>

namespace aidroid {

// Entry point of the `aidroid` executable. Returns 0 on success, 1 on a
// usage error and 2 on a data error. The resolved configuration of every
// command is logged as one JSON line on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aidroid
