#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

// Thin FFTW wrapper: power-of-two complex transforms with process-lifetime
// plan caching. Plan creation is serialized (the FFTW planner is not
// thread-safe); execution on distinct arrays is.

namespace gsw::fft {

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

inline fftw_plan plan_for(size_t n, int sign) {
  static std::map<std::pair<size_t, int>, fftw_plan> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> scratch(n);
  auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), p, p, sign,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plan) throw std::runtime_error("fftw_plan_dft_1d failed");
  cache.emplace(key, plan);
  return plan;
}

inline void execute(std::vector<std::complex<double>>& v, int sign) {
  if (v.empty() || (v.size() & (v.size() - 1)) != 0)
    throw std::invalid_argument("fft: length must be a nonzero power of two");
  fftw_plan plan = plan_for(v.size(), sign);
  auto* p = reinterpret_cast<fftw_complex*>(v.data());
  fftw_execute_dft(plan, p, p);
}

}  // namespace detail

inline void forward(std::vector<std::complex<double>>& v) {
  detail::execute(v, FFTW_FORWARD);
}

// Inverse transform, normalized by 1/N.
inline void inverse(std::vector<std::complex<double>>& v) {
  detail::execute(v, FFTW_BACKWARD);
  const double s = 1.0 / static_cast<double>(v.size());
  for (auto& x : v) x *= s;
}

// Frequency of bin k for an N-point transform at sample interval dt.
inline double bin_freq(size_t k, size_t n, double dt) {
  const auto half = n / 2;
  const double df = 1.0 / (static_cast<double>(n) * dt);
  return (k < half ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n)) * df;
}

}  // namespace gsw::fft
