#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace migrasim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // bad arguments, unknown flags, invalid parameters
inline constexpr int kExitNumerical = 2;   // tolerance not met, no bracket, no convergence
inline constexpr int kExitCoupling = 3;    // pathwise coupling violated

// Sweep grids: "lo:hi:linN", "lo:hi:logN" (N points, both ends included) or
// a comma-separated list. The result must be strictly increasing.
std::vector<double> parse_grid(const std::string& text);

// Entry point of the migrasim tool. args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace migrasim
