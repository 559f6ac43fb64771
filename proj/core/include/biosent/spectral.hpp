#pragma once
#include <complex>
#include <vector>

#include "biosent/error.hpp"

namespace biosent {

// Full complex DFT, X[k] = sum_n x[n] exp(-2*pi*i*k*n/m). Radix-2 in place for
// power-of-two m, Bluestein's chirp-z otherwise, so any token length works.
std::vector<std::complex<double>> dft(const std::vector<double>& values);

// One-sided magnitude spectrum |DFT| for bins 0..m/2 (length m/2 + 1).
// Rectangular window, no padding. Throws BadFftSize for m < 2.
std::vector<double> fft_magnitude(const std::vector<double>& values);

// The network-facing per-token feature: log(1 + |DFT|) per bin by default,
// raw magnitudes when log_compress is false.
std::vector<double> energy_features(const std::vector<double>& values, bool log_compress = true);

}  // namespace biosent
