#include "bmgc/dsp.hpp"

#include <cmath>

#include "bmgc/error.hpp"

namespace bmgc {

void fft(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  const size_t n = re.size();
  require(im.size() == n, Err::InvalidArgument, "fft: re/im size mismatch");
  require(is_pow2(n), Err::InvalidArgument, "fft: size must be a power of two");
  if (n <= 1) return;

  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      re[i] *= inv;
      im[i] *= inv;
    }
  }
}

std::vector<double> real_power_spectrum(const double* x, size_t n) {
  require(is_pow2(n) && n >= 2, Err::InvalidArgument, "real fft size must be a power of two >= 2");
  const size_t h = n / 2;

  // pack even/odd samples into a half-size complex transform
  std::vector<double> re(h), im(h);
  for (size_t i = 0; i < h; ++i) {
    re[i] = x[2 * i];
    im[i] = x[2 * i + 1];
  }
  fft(re, im);

  // untangle: X[k] = E[k] + e^{-2*pi*i*k/n} * O[k]
  std::vector<double> power(h + 1);
  for (size_t k = 0; k <= h; ++k) {
    const size_t k1 = k % h;
    const size_t k2 = (h - k) % h;
    const double er = 0.5 * (re[k1] + re[k2]);
    const double ei = 0.5 * (im[k1] - im[k2]);
    const double orr = 0.5 * (im[k1] + im[k2]);
    const double oi = -0.5 * (re[k1] - re[k2]);
    const double ang = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    const double cr = std::cos(ang), ci = std::sin(ang);
    const double xr = er + orr * cr - oi * ci;
    const double xi = ei + orr * ci + oi * cr;
    power[k] = xr * xr + xi * xi;
  }
  return power;
}

std::vector<double> hann_window(size_t n) {
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

}  // namespace bmgc
