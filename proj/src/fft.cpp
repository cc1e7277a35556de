#include "scenewise/fft.hpp"

#include <cmath>

#include "scenewise/common.hpp"

namespace scenewise {

namespace {

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

Fft::Fft(int n) : n_(n) {
  if (!power_of_two(n)) raise(ErrorKind::Config, strprintf("FFT size %d is not a power of two", n));
  twiddles_.resize(static_cast<size_t>(n / 2));
  for (int k = 0; k < n / 2; ++k) {
    double phi = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[static_cast<size_t>(k)] = {std::cos(phi), std::sin(phi)};
  }
  bitrev_.resize(static_cast<size_t>(n));
  int bits = 0;
  while ((1 << bits) < n) ++bits;
  for (int i = 0; i < n; ++i) {
    uint32_t r = 0;
    for (int b = 0; b < bits; ++b) {
      if (i & (1 << b)) r |= 1u << (bits - 1 - b);
    }
    bitrev_[static_cast<size_t>(i)] = r;
  }
}

void Fft::forward(std::complex<double>* data) const {
  const int n = n_;
  for (int i = 0; i < n; ++i) {
    uint32_t j = bitrev_[static_cast<size_t>(i)];
    if (static_cast<uint32_t>(i) < j) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    int half = len >> 1;
    int step = n / len;
    for (int base = 0; base < n; base += len) {
      for (int k = 0; k < half; ++k) {
        std::complex<double> w = twiddles_[static_cast<size_t>(k * step)];
        std::complex<double> u = data[base + k];
        std::complex<double> t = w * data[base + k + half];
        data[base + k] = u + t;
        data[base + k + half] = u - t;
      }
    }
  }
}

void Fft::inverse(std::complex<double>* data) const {
  const int n = n_;
  for (int i = 0; i < n; ++i) data[i] = std::conj(data[i]);
  forward(data);
  double scale = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) data[i] = std::conj(data[i]) * scale;
}

RealFft::RealFft(int n) : n_(n), half_(n / 2) {
  if (!power_of_two(n) || n < 2) {
    raise(ErrorKind::Config, strprintf("real FFT size %d is not a power of two >= 2", n));
  }
  buf_.resize(static_cast<size_t>(n / 2));
  unpack_.resize(static_cast<size_t>(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    double phi = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    unpack_[static_cast<size_t>(k)] = {std::cos(phi), std::sin(phi)};
  }
}

void RealFft::forward(const double* in, std::complex<double>* out) {
  const int h = n_ / 2;
  if (n_ == 2) {
    out[0] = {in[0] + in[1], 0.0};
    out[1] = {in[0] - in[1], 0.0};
    return;
  }
  for (int k = 0; k < h; ++k) buf_[static_cast<size_t>(k)] = {in[2 * k], in[2 * k + 1]};
  half_.forward(buf_.data());

  // Unpack Z[k] = E[k] + i O[k] into the length-n spectrum.
  for (int k = 0; k <= h / 2; ++k) {
    std::complex<double> zk = buf_[static_cast<size_t>(k % h)];
    std::complex<double> zc = std::conj(buf_[static_cast<size_t>((h - k) % h)]);
    std::complex<double> even = 0.5 * (zk + zc);
    std::complex<double> odd = std::complex<double>(0.0, -0.5) * (zk - zc);
    std::complex<double> w = unpack_[static_cast<size_t>(k)];
    out[k] = even + w * odd;
    if (k != 0 && k != h - k) {
      // X[n/2 - k] follows from the same pair via the mirrored twiddle.
      std::complex<double> wm = unpack_[static_cast<size_t>(h - k)];
      out[h - k] = std::conj(even) + wm * std::conj(odd);
    }
  }
  // Nyquist bin: X[h] = E[0] - O[0]
  std::complex<double> z0 = buf_[0];
  out[h] = {z0.real() - z0.imag(), 0.0};
}

}  // namespace scenewise
