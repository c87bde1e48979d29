#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace simxfer {

inline constexpr const char* kToolVersion = "0.1.0";

// One manifest per CLI run: re-running with the same flags and inputs
// reproduces the same outputs byte for byte.
struct RunManifest {
    std::string version = kToolVersion;
    std::string subcommand;
    std::map<std::string, std::string> flags;
    std::map<std::string, std::string> input_hashes; // path -> fnv1a64 hex
    std::uint64_t seed = 0;
    std::string timestamp; // ISO 8601 UTC

    void add_input(const std::string& path);
    void save(const std::string& path) const;
};

std::uint64_t fnv1a64_file(const std::string& path);
std::string fnv1a64_hex(std::uint64_t h);
std::string utc_timestamp();

} // namespace simxfer
