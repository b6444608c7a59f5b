#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pds::cli {

// Entry point behind the pds binary; exposed so tests can drive the full
// surface in-process. Returns 0 on success, 1 on validation errors, 2 on
// numerical failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pds::cli
