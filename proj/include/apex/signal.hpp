#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace apex {

// Uniformly sampled time series. ECG values are millivolts, GSR values are
// microsiemens; the processing code never depends on the unit.
struct Signal {
  double sampling_rate_hz = 0.0;
  std::vector<double> samples;
  double start_time_s = 0.0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sampling_rate_hz;
  }
};

enum class FilterKind { low_pass, band_pass };

struct FilterSpec {
  FilterKind kind = FilterKind::low_pass;
  int order = 4;
  double cutoff_low_hz = 0.0;   // low_pass: the single cutoff
  double cutoff_high_hz = 0.0;  // band_pass only

  static FilterSpec lowpass(double cutoff_hz, int order = 4) {
    return {FilterKind::low_pass, order, cutoff_hz, 0.0};
  }
  static FilterSpec bandpass(double low_hz, double high_hz, int order = 4) {
    return {FilterKind::band_pass, order, low_hz, high_hz};
  }
};

// Zero-phase Butterworth low-pass (forward-backward, passband gain ~1).
Signal apply_lowpass(const Signal& signal, const FilterSpec& spec);

// Zero-phase Butterworth band-pass, `spec.order` poles per edge.
Signal apply_bandpass(const Signal& signal, const FilterSpec& spec);

// Fixed windows of `window_s` seconds every `shift_s` seconds. The trailing
// partial window is dropped; a signal shorter than one window yields an
// empty result.
std::vector<Signal> segment_windows(const Signal& signal, double window_s = 5.0,
                                    double shift_s = 5.0);

// CSV interchange: header `t_seconds,value`, one sample per row. The reader
// infers the sampling rate from the first two rows and rejects non-uniform
// time steps (tolerance 1e-6 s).
Signal read_signal_csv(const std::filesystem::path& path);
void write_signal_csv(const std::filesystem::path& path, const Signal& signal);

namespace detail {

// One second-order section, scipy layout: {b0, b1, b2, a0, a1, a2}, a0 == 1.
using SosSection = std::array<double, 6>;

// Digital Butterworth design via analog prototype, prewarped frequency
// transform and bilinear transform; gain normalized to 1 at DC (low-pass)
// or at the warped center frequency (band-pass).
std::vector<SosSection> design_butterworth(const FilterSpec& spec, double fs_hz);

// Forward-backward SOS filtering with odd-reflection padding of
// 3 x (pole count) samples per side and steady-state initial conditions.
std::vector<double> sosfiltfilt(const std::vector<SosSection>& sos,
                                const std::vector<double>& x);

}  // namespace detail

}  // namespace apex
