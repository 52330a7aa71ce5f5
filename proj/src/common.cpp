#include "himfr/common.hpp"

#include <cstdlib>
#include <iostream>

namespace himfr {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("HIMFR_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return static_cast<std::uint64_t>(v);
        log_warning(std::string("ignoring malformed HIMFR_SEED: ") + env);
    }
    return 42;
}

void log_warning(const std::string& msg) {
    std::cerr << "[himfr] warning: " << msg << "\n";
}

}  // namespace himfr
