#pragma once

#include <complex>
#include <vector>

namespace flowvoc {
namespace fft {

// Mixed-radix FFT for sizes that factor into 2, 3, 5. Covers every
// transform length used by the pipeline without external dependencies.
class Fft {
  public:
    explicit Fft(int n);

    int size() const { return n_; }

    // in-place, unnormalized: X[k] = sum_j x[j] exp(-2*pi*i*j*k/n)
    void forward(std::complex<double>* x) const;
    // in-place, unnormalized inverse kernel (caller divides by n)
    void inverse(std::complex<double>* x) const;

  private:
    void run(std::complex<double>* x, std::complex<double>* ws,
             const std::complex<double>* tw, int n, int depth, int tw_stride) const;

    int n_;
    std::vector<int> factors_;
    std::vector<std::complex<double>> tw_fwd_, tw_inv_;
};

// cached plan per size (thread-safe)
const Fft& plan_for(int n);

// real transform helpers; out has n/2+1 bins
void rfft(const double* x, int n, std::complex<double>* out);
// inverse of rfft including the 1/n scaling; imaginary parts of bins 0 and
// n/2 are ignored (treated as zero)
void irfft(const std::complex<double>* spec, int n, double* out);

}  // namespace fft
}  // namespace flowvoc
