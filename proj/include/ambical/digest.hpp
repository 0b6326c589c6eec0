#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace ambical {

// FNV-1a, 64 bit. Used for config and dataset digests in reports; not a
// cryptographic hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::string digest_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string digest_hex(const std::string& s) {
  return digest_hex(fnv1a64(s));
}

}  // namespace ambical
