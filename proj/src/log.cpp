#include "simxfer/log.hpp"

#include <iostream>
#include <mutex>

namespace simxfer {

void log_warn(const std::string& msg) {
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "warning: " << msg << "\n";
}

} // namespace simxfer
