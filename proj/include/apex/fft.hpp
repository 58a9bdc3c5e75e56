#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace apex {

// One-sided DFT of a real sequence: returns n/2 + 1 bins (DC through
// Nyquist). Thread-safe; plans are cached per transform size.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

}  // namespace apex
