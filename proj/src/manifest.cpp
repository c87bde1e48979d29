#include "simxfer/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "simxfer/errors.hpp"

namespace simxfer {

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path + " for hashing");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= std::uint8_t(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string fnv1a64_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::add_input(const std::string& path) {
    input_hashes[path] = fnv1a64_hex(fnv1a64_file(path));
}

void RunManifest::save(const std::string& path) const {
    nlohmann::json doc{{"version", version},
                       {"subcommand", subcommand},
                       {"flags", flags},
                       {"inputs", input_hashes},
                       {"seed", seed},
                       {"timestamp", timestamp}};
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << doc.dump(2) << "\n";
}

} // namespace simxfer
