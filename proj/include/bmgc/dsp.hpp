#pragma once

#include <cstddef>
#include <vector>

namespace bmgc {

// In-place iterative radix-2 FFT. Sizes must be powers of two.
void fft(std::vector<double>& re, std::vector<double>& im, bool inverse = false);

// One-sided power spectrum |X[k]|^2, k = 0..n/2, of a real frame of length n
// (power of two), computed with a half-size complex FFT.
std::vector<double> real_power_spectrum(const double* x, size_t n);

// Periodic Hann window: w[i] = 0.5 - 0.5*cos(2*pi*i/n).
std::vector<double> hann_window(size_t n);

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace bmgc
