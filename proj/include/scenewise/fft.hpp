#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace scenewise {

// Iterative radix-2 FFT, double precision, power-of-two sizes.
class Fft {
 public:
  explicit Fft(int n);

  int size() const { return n_; }

  void forward(std::complex<double>* data) const;
  void inverse(std::complex<double>* data) const;

 private:
  int n_;
  std::vector<std::complex<double>> twiddles_;  // e^{-2pi i k / n}, k < n/2
  std::vector<uint32_t> bitrev_;
};

// Real-input spectrum via the packed half-size complex transform.
class RealFft {
 public:
  explicit RealFft(int n);  // n power of two, n >= 2

  int size() const { return n_; }

  // `out` must hold n/2 + 1 bins.
  void forward(const double* in, std::complex<double>* out);

 private:
  int n_;
  Fft half_;
  std::vector<std::complex<double>> buf_;
  std::vector<std::complex<double>> unpack_;  // e^{-2pi i k / n}
};

}  // namespace scenewise
