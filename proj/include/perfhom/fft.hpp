#pragma once

// Thin RAII wrapper over FFTW's real-to-complex 2D transforms.

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>

#include <fftw3.h>

#include "perfhom/core.hpp"

namespace perfhom {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Real 2D transform on an ny x nx row-major array. The half spectrum has
/// ny x (nx/2 + 1) entries. backward(forward(x)) == nx*ny*x (unnormalized).
class RealFft2d {
 public:
  RealFft2d(int nx, int ny) : nx_(nx), ny_(ny), nxc_(nx / 2 + 1) {
    if (nx < 1 || ny < 1) throw InvalidArgument("RealFft2d: sizes must be positive");
    real_ = fftw_alloc_real(real_size());
    spec_ = fftw_alloc_complex(spectrum_size());
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_2d(ny_, nx_, real_, spec_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_2d(ny_, nx_, spec_, real_, FFTW_ESTIMATE);
  }
  RealFft2d(const RealFft2d&) = delete;
  RealFft2d& operator=(const RealFft2d&) = delete;
  ~RealFft2d() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nx_complex() const { return nxc_; }
  std::size_t real_size() const { return static_cast<std::size_t>(nx_) * ny_; }
  std::size_t spectrum_size() const { return static_cast<std::size_t>(nxc_) * ny_; }

  std::span<double> real() { return {real_, real_size()}; }
  std::span<std::complex<double>> spectrum() {
    return {reinterpret_cast<std::complex<double>*>(spec_), spectrum_size()};
  }

  void forward() { fftw_execute(fwd_); }
  /// Destroys the spectrum buffer (c2r transforms are out-of-place-destructive).
  void backward() { fftw_execute(bwd_); }

  /// Signed integer frequency of index k along an axis of length n.
  static int frequency(int k, int n) { return k <= n / 2 ? k : k - n; }

 private:
  int nx_, ny_, nxc_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

/// Smallest odd integer >= n whose prime factors are in {3, 5, 7}. Odd
/// lengths have no Nyquist mode, which keeps odd-symmetric multipliers real.
inline int odd_fft_size(int n) {
  for (int m = std::max(n, 1) | 1;; m += 2) {
    int r = m;
    for (int p : {3, 5, 7})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

}  // namespace perfhom
