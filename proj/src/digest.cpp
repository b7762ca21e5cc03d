#include "simcond/digest.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <vector>

#include "simcond/errors.hpp"

namespace simcond {

namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ULL;
}

Fnv1a& Fnv1a::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t c : bytes) {
    state_ ^= c;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (v >> (8 * i)) & 0xffU;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update_double(double v) { return update_u64(std::bit_cast<std::uint64_t>(v)); }

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string digest_hex(std::string_view bytes) { return Fnv1a{}.update(bytes).hex(); }

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return digest_hex(std::string_view(data.data(), data.size()));
}

}  // namespace simcond
