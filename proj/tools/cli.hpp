// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpgm::cli {

/// Exit codes returned by run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;     // bad flags, config file or input files
inline constexpr int kExitNumerical = 2;  // non-finite training state or failed check

/// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpgm::cli
