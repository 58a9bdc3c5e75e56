#include "apex/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

#include "apex/errors.hpp"

namespace apex {

namespace {

// fftw_plan creation is not thread-safe; new-array execution is. Plans are
// created with FFTW_UNALIGNED so they may run on plain vector storage.
std::mutex plan_mutex;
std::map<std::size_t, fftw_plan>& plan_cache() {
  static std::map<std::size_t, fftw_plan> cache;
  return cache;
}

fftw_plan plan_for(std::size_t n) {
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto& cache = plan_cache();
  if (const auto it = cache.find(n); it != cache.end()) return it->second;
  std::vector<double> in(n);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(
      static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
      FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plan == nullptr) throw InputError("rfft: failed to create FFT plan");
  cache.emplace(n, plan);
  return plan;
}

}  // namespace

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  if (x.empty()) throw InputError("rfft: empty input");
  const std::size_t n = x.size();
  fftw_plan plan = plan_for(n);
  std::vector<double> in(x);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_execute_dft_r2c(plan, in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace apex
