#pragma once

#include <cstdint>
#include <string_view>

namespace rollplan {

/// Producing-config hash and seed stamped into every artifact.
struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rollplan
