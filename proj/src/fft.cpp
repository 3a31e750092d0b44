#include "convhead/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace convhead {

namespace {

std::mutex g_planner_mutex;
std::map<std::size_t, fftw_plan>& plan_cache() {
  static std::map<std::size_t, fftw_plan> cache;
  return cache;
}

fftw_plan plan_for(std::size_t n) {
  std::lock_guard<std::mutex> lock(g_planner_mutex);
  auto& cache = plan_cache();
  auto it = cache.find(n);
  if (it != cache.end()) {
    return it->second;
  }
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  if (plan == nullptr) {
    throw std::runtime_error("fftw: failed to create plan of size " + std::to_string(n));
  }
  cache.emplace(n, plan);
  return plan;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n), plan_(plan_for(n)) {}

std::vector<std::complex<double>> RealFft::forward(const std::vector<double>& input) const {
  double* in = fftw_alloc_real(n_);
  fftw_complex* out = fftw_alloc_complex(n_ / 2 + 1);
  std::memset(in, 0, n_ * sizeof(double));
  const std::size_t copy = input.size() < n_ ? input.size() : n_;
  std::memcpy(in, input.data(), copy * sizeof(double));

  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), in, out);

  std::vector<std::complex<double>> bins(n_ / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    bins[k] = {out[k][0], out[k][1]};
  }
  fftw_free(in);
  fftw_free(out);
  return bins;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) {
    p <<= 1;
  }
  return p;
}

}  // namespace convhead
