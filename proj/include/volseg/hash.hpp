#ifndef VOLSEG_HASH_HPP
#define VOLSEG_HASH_HPP

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>

namespace volseg {

// FNV-1a, 64-bit. Used to bind weight payloads to their topology files and to
// fingerprint pipeline inputs in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace volseg

#endif
