#pragma once

#include <string>

namespace simxfer {

// Diagnostics go to stderr only; data files stay byte-stable.
void log_warn(const std::string& msg);

} // namespace simxfer
