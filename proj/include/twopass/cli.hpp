#ifndef TWOPASS_CLI_HPP
#define TWOPASS_CLI_HPP

#include <iosfwd>

namespace twopass {

// Entry point behind the `twopass` binary. Returns 0 on success, 1 on
// usage/config errors, 2 on data or checkpoint errors.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace twopass

#endif  // TWOPASS_CLI_HPP
