#include "biosent/spectral.hpp"

#include <cmath>
#include <numbers>

namespace biosent {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 Cooley-Tukey, n a power of two. inverse=true omits the
// 1/n factor (callers scale where needed).
void fft_pow2(std::vector<cd>& a, bool inverse) {
  std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    cd wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        cd u = a[i + j];
        cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Bluestein's algorithm: expresses an arbitrary-length DFT as a circular
// convolution, evaluated with two power-of-two FFTs.
std::vector<cd> dft_bluestein(const std::vector<double>& x) {
  std::size_t n = x.size();
  std::size_t conv = next_pow2(2 * n - 1);

  // chirp[k] = exp(-i*pi*k^2/n); k^2 mod 2n keeps the angle argument small.
  std::vector<cd> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t k2 = (k * k) % (2 * n);
    double ang = std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cd(std::cos(ang), -std::sin(ang));
  }

  std::vector<cd> a(conv, cd(0.0, 0.0)), b(conv, cd(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[conv - k] = std::conj(chirp[k]);

  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t i = 0; i < conv; ++i) a[i] *= b[i];
  fft_pow2(a, true);

  std::vector<cd> out(n);
  double inv = 1.0 / static_cast<double>(conv);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * inv * chirp[k];
  return out;
}

}  // namespace

std::vector<cd> dft(const std::vector<double>& values) {
  std::size_t m = values.size();
  if (m < 2) throw Error(ErrorCode::BadFftSize, "dft needs at least 2 samples");
  if (is_pow2(m)) {
    std::vector<cd> a(m);
    for (std::size_t i = 0; i < m; ++i) a[i] = cd(values[i], 0.0);
    fft_pow2(a, false);
    return a;
  }
  return dft_bluestein(values);
}

std::vector<double> fft_magnitude(const std::vector<double>& values) {
  auto spectrum = dft(values);
  std::size_t m = values.size();
  std::vector<double> bins(m / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] = std::abs(spectrum[k]);
  return bins;
}

std::vector<double> energy_features(const std::vector<double>& values, bool log_compress) {
  auto bins = fft_magnitude(values);
  if (log_compress)
    for (auto& b : bins) b = std::log1p(b);
  return bins;
}

}  // namespace biosent
