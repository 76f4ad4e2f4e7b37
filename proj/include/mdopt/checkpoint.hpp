#pragma once

#include <string>

#include "mdopt/strategies.hpp"

namespace mdopt {

// Versioned native-endian binary: magic, version, ModelSpec, then the
// shared vector and every specific vector.
void save_checkpoint(const MdrState& state, const std::string& path);
MdrState load_checkpoint(const std::string& path);

}  // namespace mdopt
