#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace proxbridge {

/// Incremental 64-bit FNV-1a.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) {
    if (v == 0.0) v = 0.0;  // fold -0 into +0
    bytes(&v, sizeof v);
  }
  void f64s(std::span<const double> v) {
    for (double d : v) f64(d);
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace proxbridge
