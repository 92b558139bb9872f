#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aimdit {

// args excludes the program name. Returns the process exit status:
// 0 ok, 1 usage/validation, 2 numeric, 3 I/O or file format.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aimdit
