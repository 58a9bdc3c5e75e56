#include "apex/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "apex/csv.hpp"
#include "apex/errors.hpp"

namespace apex {

namespace {

void check_samples(const Signal& signal, const char* op) {
  if (signal.sampling_rate_hz <= 0.0) {
    throw InputError(std::string(op) + ": sampling_rate_hz must be > 0");
  }
  if (signal.samples.empty()) {
    throw InputError(std::string(op) + ": signal has no samples");
  }
  for (double v : signal.samples) {
    if (!std::isfinite(v)) {
      throw InputError(std::string(op) + ": signal contains non-finite samples");
    }
  }
}

using Complex = std::complex<double>;

std::complex<double> cascade_response(
    const std::vector<detail::SosSection>& sos, double omega) {
  const Complex e1 = std::exp(Complex(0.0, -omega));
  const Complex e2 = e1 * e1;
  Complex h(1.0, 0.0);
  for (const auto& s : sos) {
    h *= (s[0] + s[1] * e1 + s[2] * e2) / (1.0 + s[4] * e1 + s[5] * e2);
  }
  return h;
}

// Pairs digital poles into biquad denominators. Even-order Butterworth
// designs give strictly complex conjugate pairs; real poles are handled
// anyway so the routine does not silently mis-pair on edge cases.
std::vector<detail::SosSection> sections_from_poles(
    const std::vector<Complex>& poles) {
  std::vector<Complex> upper;
  std::vector<double> reals;
  for (const Complex& p : poles) {
    const double tol = 1e-10 * std::max(1.0, std::abs(p));
    if (p.imag() > tol) {
      upper.push_back(p);
    } else if (p.imag() >= -tol) {
      reals.push_back(p.real());
    }
  }
  if (upper.size() * 2 + reals.size() != poles.size()) {
    throw ConfigError("butterworth design produced unpaired complex poles");
  }
  std::sort(upper.begin(), upper.end(), [](const Complex& a, const Complex& b) {
    const double ma = std::norm(a), mb = std::norm(b);
    if (ma != mb) return ma < mb;
    return a.real() < b.real();
  });
  std::sort(reals.begin(), reals.end());

  std::vector<detail::SosSection> sos;
  for (const Complex& p : upper) {
    sos.push_back({1.0, 0.0, 0.0, 1.0, -2.0 * p.real(), std::norm(p)});
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    sos.push_back({1.0, 0.0, 0.0, 1.0, -(reals[i] + reals[i + 1]),
                   reals[i] * reals[i + 1]});
  }
  if (reals.size() % 2 == 1) {
    sos.push_back({1.0, 0.0, 0.0, 1.0, -reals.back(), 0.0});
  }
  return sos;
}

double prewarp(double f_hz, double fs_hz) {
  return 2.0 * fs_hz * std::tan(std::numbers::pi * f_hz / fs_hz);
}

}  // namespace

namespace detail {

std::vector<SosSection> design_butterworth(const FilterSpec& spec,
                                           double fs_hz) {
  if (fs_hz <= 0.0) throw ConfigError("design_butterworth: fs must be > 0");
  if (spec.order < 1) throw ConfigError("design_butterworth: order must be >= 1");
  const double nyquist = fs_hz / 2.0;
  const int n = spec.order;

  // Analog low-pass prototype, unit cutoff, left half-plane poles.
  std::vector<Complex> proto(n);
  for (int k = 0; k < n; ++k) {
    const double angle = std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n);
    proto[k] = std::exp(Complex(0.0, angle));
  }

  std::vector<Complex> analog_poles;
  double omega_ref = 0.0;  // digital frequency where gain is normalized to 1
  if (spec.kind == FilterKind::low_pass) {
    if (spec.cutoff_low_hz <= 0.0 || spec.cutoff_low_hz >= nyquist) {
      throw ConfigError("low-pass cutoff must satisfy 0 < cutoff < Nyquist (" +
                        format_double(spec.cutoff_low_hz) + " Hz at fs " +
                        format_double(fs_hz) + ")");
    }
    const double wc = prewarp(spec.cutoff_low_hz, fs_hz);
    for (const Complex& p : proto) analog_poles.push_back(p * wc);
    omega_ref = 0.0;
  } else {
    if (!(spec.cutoff_low_hz > 0.0 && spec.cutoff_low_hz < spec.cutoff_high_hz &&
          spec.cutoff_high_hz < nyquist)) {
      throw ConfigError(
          "band-pass cutoffs must satisfy 0 < low < high < Nyquist (" +
          format_double(spec.cutoff_low_hz) + "-" +
          format_double(spec.cutoff_high_hz) + " Hz at fs " +
          format_double(fs_hz) + ")");
    }
    const double w1 = prewarp(spec.cutoff_low_hz, fs_hz);
    const double w2 = prewarp(spec.cutoff_high_hz, fs_hz);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;
    for (const Complex& p : proto) {
      const Complex t = 0.5 * bw * p;
      const Complex r = std::sqrt(t * t - w0 * w0);
      analog_poles.push_back(t + r);
      analog_poles.push_back(t - r);
    }
    omega_ref = 2.0 * std::atan(w0 / (2.0 * fs_hz));
  }

  // Bilinear transform.
  const double fs2 = 2.0 * fs_hz;
  std::vector<Complex> digital_poles;
  digital_poles.reserve(analog_poles.size());
  for (const Complex& p : analog_poles) {
    digital_poles.push_back((fs2 + p) / (fs2 - p));
  }

  std::vector<SosSection> sos = sections_from_poles(digital_poles);

  // Numerator zeros are known in closed form: low-pass has all zeros at
  // z = -1, band-pass has one zero pair {+1, -1} per section. An odd pole
  // count leaves one first-order section, emitted last by the pairing.
  for (std::size_t i = 0; i < sos.size(); ++i) {
    auto& s = sos[i];
    const bool first_order =
        (i + 1 == sos.size()) && (digital_poles.size() % 2 == 1);
    if (spec.kind == FilterKind::low_pass) {
      if (first_order) {
        s[0] = 1.0; s[1] = 1.0; s[2] = 0.0;
      } else {
        s[0] = 1.0; s[1] = 2.0; s[2] = 1.0;
      }
    } else {
      s[0] = 1.0; s[1] = 0.0; s[2] = -1.0;
    }
  }

  const double gain = std::abs(cascade_response(sos, omega_ref));
  if (!(gain > 0.0) || !std::isfinite(gain)) {
    throw ConfigError("butterworth design yielded a degenerate response");
  }
  for (int i = 0; i < 3; ++i) sos.front()[i] /= gain;
  return sos;
}

namespace {

// One pass of direct-form-II-transposed SOS filtering; z carries two states
// per section and is updated in place.
void sos_pass(const std::vector<SosSection>& sos, std::vector<double>& z,
              const double* x, double* y, std::size_t n) {
  const std::size_t nsec = sos.size();
  for (std::size_t k = 0; k < n; ++k) {
    double v = x[k];
    for (std::size_t si = 0; si < nsec; ++si) {
      const auto& s = sos[si];
      double& z1 = z[2 * si];
      double& z2 = z[2 * si + 1];
      const double out = s[0] * v + z1;
      z1 = s[1] * v - s[4] * out + z2;
      z2 = s[2] * v - s[5] * out;
      v = out;
    }
    y[k] = v;
  }
}

// Steady-state states for unit constant input, section by section, so that
// filtering a constant yields that constant (times the DC gain) immediately.
std::vector<double> step_initial_state(const std::vector<SosSection>& sos) {
  std::vector<double> zi(2 * sos.size(), 0.0);
  double cum_gain = 1.0;
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const auto& s = sos[i];
    const double sum_b = s[0] + s[1] + s[2];
    const double sum_a = 1.0 + s[4] + s[5];
    const double g = sum_a != 0.0 ? sum_b / sum_a : 0.0;
    zi[2 * i] = (g - s[0]) * cum_gain;
    zi[2 * i + 1] = (s[2] - s[5] * g) * cum_gain;
    cum_gain *= g;
  }
  return zi;
}

}  // namespace

std::vector<double> sosfiltfilt(const std::vector<SosSection>& sos,
                                const std::vector<double>& x) {
  const std::size_t n = x.size();
  const std::size_t edge = 3 * 2 * sos.size();
  if (n <= edge) {
    throw InputError("sosfiltfilt: signal too short for edge padding (need > " +
                     std::to_string(edge) + " samples, got " +
                     std::to_string(n) + ")");
  }

  // Odd reflection about the endpoints removes the step discontinuity the
  // filter would otherwise see at the boundaries.
  std::vector<double> ext;
  ext.reserve(n + 2 * edge);
  for (std::size_t i = edge; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= edge; ++i) {
    ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
  }

  const std::vector<double> zi = step_initial_state(sos);
  std::vector<double> z(zi.size());
  std::vector<double> y(ext.size());

  for (std::size_t i = 0; i < zi.size(); ++i) z[i] = zi[i] * ext.front();
  sos_pass(sos, z, ext.data(), y.data(), ext.size());

  std::reverse(y.begin(), y.end());
  for (std::size_t i = 0; i < zi.size(); ++i) z[i] = zi[i] * y.front();
  std::vector<double> y2(y.size());
  sos_pass(sos, z, y.data(), y2.data(), y.size());
  std::reverse(y2.begin(), y2.end());

  return std::vector<double>(y2.begin() + edge, y2.end() - edge);
}

}  // namespace detail

Signal apply_lowpass(const Signal& signal, const FilterSpec& spec) {
  if (spec.kind != FilterKind::low_pass) {
    throw ConfigError("apply_lowpass: spec.kind must be low_pass");
  }
  check_samples(signal, "apply_lowpass");
  const auto sos = detail::design_butterworth(spec, signal.sampling_rate_hz);
  Signal out = signal;
  out.samples = detail::sosfiltfilt(sos, signal.samples);
  return out;
}

Signal apply_bandpass(const Signal& signal, const FilterSpec& spec) {
  if (spec.kind != FilterKind::band_pass) {
    throw ConfigError("apply_bandpass: spec.kind must be band_pass");
  }
  check_samples(signal, "apply_bandpass");
  const auto sos = detail::design_butterworth(spec, signal.sampling_rate_hz);
  Signal out = signal;
  out.samples = detail::sosfiltfilt(sos, signal.samples);
  return out;
}

std::vector<Signal> segment_windows(const Signal& signal, double window_s,
                                    double shift_s) {
  if (window_s <= 0.0 || shift_s <= 0.0) {
    throw ConfigError("segment_windows: window and shift must be > 0");
  }
  check_samples(signal, "segment_windows");
  const double fs = signal.sampling_rate_hz;
  const std::size_t n = signal.samples.size();
  const auto window_len = static_cast<std::size_t>(std::llround(window_s * fs));
  const auto shift_len = static_cast<std::size_t>(std::llround(shift_s * fs));
  if (window_len == 0 || shift_len == 0) {
    throw ConfigError("segment_windows: window/shift shorter than one sample");
  }

  std::vector<Signal> windows;
  for (std::size_t start = 0; start + window_len <= n; start += shift_len) {
    Signal w;
    w.sampling_rate_hz = fs;
    w.start_time_s = signal.start_time_s + static_cast<double>(start) / fs;
    w.samples.assign(signal.samples.begin() + start,
                     signal.samples.begin() + start + window_len);
    windows.push_back(std::move(w));
  }
  return windows;
}

Signal read_signal_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open signal file " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line) != "t_seconds,value") {
    throw IngestError("bad header in " + path.string() +
                      " (expected 't_seconds,value')");
  }

  std::vector<double> times;
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split_csv_line(trimmed);
    if (fields.size() != 2) {
      throw IngestError(path.string() + ":" + std::to_string(row) +
                        ": expected 2 columns");
    }
    const std::string where = path.string() + ":" + std::to_string(row);
    times.push_back(parse_double(trim(fields[0]), where));
    values.push_back(parse_double(trim(fields[1]), where));
    if (!std::isfinite(times.back()) || !std::isfinite(values.back())) {
      throw IngestError(where + ": non-finite sample");
    }
  }
  if (times.size() < 2) {
    throw IngestError(path.string() + ": need at least 2 samples to infer fs");
  }

  const double dt = times[1] - times[0];
  if (dt <= 0.0) {
    throw IngestError(path.string() + ": time must be strictly increasing");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-6) {
      throw IngestError(path.string() + ": non-uniform sampling at row " +
                        std::to_string(i + 2));
    }
  }

  Signal s;
  s.sampling_rate_hz = 1.0 / dt;
  s.start_time_s = times.front();
  s.samples = std::move(values);
  return s;
}

void write_signal_csv(const std::filesystem::path& path, const Signal& signal) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write signal file " + path.string());
  out << "t_seconds,value\n";
  const double fs = signal.sampling_rate_hz;
  for (std::size_t i = 0; i < signal.samples.size(); ++i) {
    const double t = signal.start_time_s + static_cast<double>(i) / fs;
    out << format_double(t) << ',' << format_double(signal.samples[i]) << '\n';
  }
}

}  // namespace apex
