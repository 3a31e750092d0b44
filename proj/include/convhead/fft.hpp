#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace convhead {

/// Real-to-complex FFT backed by FFTW. Plans are cached per size behind a
/// mutex (FFTW's planner is not thread safe); execution runs on per-call
/// buffers and is safe from concurrent workers.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  /// Returns the n/2 + 1 non-redundant bins. Input shorter than n is
  /// zero-padded.
  std::vector<std::complex<double>> forward(const std::vector<double>& input) const;

  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  void* plan_;  // fftw_plan, shared via the per-size cache
};

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

}  // namespace convhead
