#ifndef TWOPASS_CHECKPOINT_HPP
#define TWOPASS_CHECKPOINT_HPP

#include <map>
#include <string>

#include "twopass/model.hpp"

namespace twopass {

// Checkpoint file: "DLCK" magic, u32 version, a key=value config section
// describing the architecture, then named parameter groups ("enc", "rnnt",
// "delib") with per-tensor names, shapes and little-endian float64 data.
// Round-trips bit-exactly.
void save_checkpoint(const TwoPassModel& model, const std::string& path);
TwoPassModel load_checkpoint(const std::string& path);

// Group-level primitives, exposed for tests of the container format.
void save_param_groups(const std::map<std::string, const ParamSet*>& groups,
                       const std::map<std::string, std::string>& config,
                       const std::string& path);
struct GroupFile {
  std::map<std::string, std::string> config;
  std::map<std::string, ParamSet> groups;
};
GroupFile load_param_groups(const std::string& path);

}  // namespace twopass

#endif  // TWOPASS_CHECKPOINT_HPP
