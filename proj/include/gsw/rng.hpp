#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "gsw/constants.hpp"

// Counter-based random number generation (Philox4x32-10, Salmon et al. 2011).
// Streams are addressed by (seed, stream_id); distinct stream_ids occupy
// disjoint counter spaces and are statistically independent, which makes
// parallel runs reproducible without any shared state.

namespace gsw {

namespace detail {

inline void philox_round(std::array<uint32_t, 4>& ctr, uint32_t k0, uint32_t k1) {
  constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  const uint64_t p0 = static_cast<uint64_t>(kM0) * ctr[0];
  const uint64_t p1 = static_cast<uint64_t>(kM1) * ctr[2];
  const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
  const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          uint32_t k0, uint32_t k1) {
  constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    philox_round(ctr, k0, k1);
    k0 += kW0;
    k1 += kW1;
  }
  return ctr;
}

}  // namespace detail

class NoiseStream {
 public:
  NoiseStream() : NoiseStream(0, 0) {}
  NoiseStream(uint64_t seed, uint64_t stream_id)
      : key0_(static_cast<uint32_t>(seed)),
        key1_(static_cast<uint32_t>(seed >> 32)),
        stream_(stream_id) {}

  uint64_t seed() const {
    return (static_cast<uint64_t>(key1_) << 32) | key0_;
  }
  uint64_t stream_id() const { return stream_; }

  uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  uint64_t next_u64() {
    const uint64_t lo = next_u32();
    const uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on (0,1], 53-bit resolution.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via the Marsaglia-Tsang ziggurat (256 layers).
  double next_gaussian() {
    const Ziggurat& z = ziggurat();
    for (;;) {
      const uint32_t bits = next_u32();
      const int i = static_cast<int>(bits & 0xFF);
      const double u = 2.0 * next_uniform() - 1.0;
      const double x = u * z.x[i];
      if (std::abs(x) < z.x[i + 1]) return x;
      if (i == 0) {
        // tail beyond r
        double x1, y;
        do {
          x1 = -std::log(next_uniform()) / z.r;
          y = -std::log(next_uniform());
        } while (y + y < x1 * x1);
        return x > 0 ? z.r + x1 : -(z.r + x1);
      }
      const double f = std::exp(-0.5 * x * x);
      if (z.f[i + 1] + next_uniform() * (z.f[i] - z.f[i + 1]) < f) return x;
    }
  }

  std::pair<double, double> next_gaussian_pair() {
    const double a = next_gaussian();
    const double b = next_gaussian();
    return {a, b};
  }

 private:
  struct Ziggurat {
    double r = 3.6541528853610088;
    double x[257];
    double f[257];
    Ziggurat() {
      const double v = 0.00492867323399;
      auto pdf = [](double t) { return std::exp(-0.5 * t * t); };
      x[0] = v / pdf(r);  // base strip: equivalent width including the tail
      x[1] = r;
      for (int i = 1; i < 255; ++i)
        x[i + 1] = std::sqrt(-2.0 * std::log(v / x[i] + pdf(x[i])));
      x[256] = 0.0;
      for (int i = 0; i < 257; ++i) f[i] = pdf(x[i]);
    }
  };
  static const Ziggurat& ziggurat() {
    static const Ziggurat z;
    return z;
  }

  void refill() {
    const std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(block_), static_cast<uint32_t>(block_ >> 32),
        static_cast<uint32_t>(stream_), static_cast<uint32_t>(stream_ >> 32)};
    buf_ = detail::philox4x32(ctr, key0_, key1_);
    ++block_;
    pos_ = 0;
  }

  uint32_t key0_ = 0, key1_ = 0;
  uint64_t stream_ = 0;
  uint64_t block_ = 0;
  std::array<uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline NoiseStream make_noise_stream(uint64_t seed, uint64_t stream_id) {
  return NoiseStream(seed, stream_id);
}

// FNV-1a, used for content hashes in manifests and for deriving stream ids
// from strings.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace gsw
