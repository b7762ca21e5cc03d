#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace simcond {

// 64-bit FNV-1a. Used for config digests and stage cache keys; not a
// cryptographic hash.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes);
  Fnv1a& update(std::span<const std::uint8_t> bytes);
  Fnv1a& update_u64(std::uint64_t v);
  Fnv1a& update_double(double v);
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string digest_hex(std::string_view bytes);
std::string digest_file(const std::string& path);

inline constexpr std::string_view kToolVersion = "simcond 0.3.0";

}  // namespace simcond
