#include "apex/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include "apex/csv.hpp"
#include "apex/errors.hpp"
#include "apex/fft.hpp"
#include "apex/parallel.hpp"

namespace apex {

namespace {

constexpr double kHistBinMs = 7.8125;  // 1/128 s, standard HRV histogram bin
constexpr double kScrMinRiseUs = 0.01;

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_variance(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size());
}

std::vector<double> successive_diffs(const std::vector<double>& v) {
  std::vector<double> d;
  d.reserve(v.size() > 0 ? v.size() - 1 : 0);
  for (std::size_t i = 1; i < v.size(); ++i) d.push_back(v[i] - v[i - 1]);
  return d;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

// Population skewness m3 / m2^1.5; zero for a constant sequence.
double skewness_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  const double n = static_cast<double>(v.size());
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

// Excess kurtosis m4 / m2^2 - 3; zero for a constant sequence.
double kurtosis_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  const double n = static_cast<double>(v.size());
  m2 /= n;
  m4 /= n;
  if (m2 <= 0.0) return 0.0;
  return m4 / (m2 * m2) - 3.0;
}

struct Histogram {
  long long k_min = 0;
  std::vector<double> counts;  // dense over [k_min, k_min + counts.size())
  long long mode_k = 0;        // ties resolved toward the lower bin
  double mode_count = 0.0;
};

Histogram rr_histogram(const std::vector<double>& rr) {
  long long k_min = std::numeric_limits<long long>::max();
  long long k_max = std::numeric_limits<long long>::min();
  std::vector<long long> keys;
  keys.reserve(rr.size());
  for (double x : rr) {
    const auto k = static_cast<long long>(std::floor(x / kHistBinMs));
    keys.push_back(k);
    k_min = std::min(k_min, k);
    k_max = std::max(k_max, k);
  }
  Histogram h;
  h.k_min = k_min;
  h.counts.assign(static_cast<std::size_t>(k_max - k_min + 1), 0.0);
  for (long long k : keys) h.counts[static_cast<std::size_t>(k - k_min)] += 1.0;
  h.mode_k = k_min;
  h.mode_count = h.counts[0];
  for (std::size_t i = 1; i < h.counts.size(); ++i) {
    if (h.counts[i] > h.mode_count) {
      h.mode_count = h.counts[i];
      h.mode_k = k_min + static_cast<long long>(i);
    }
  }
  return h;
}

// Least-squares triangular fit to the RR histogram. The triangle is zero
// outside [N, M], rises linearly to the mode-bin center, and falls back to
// zero; N and M range over bin edges. Ties prefer the narrower triangle,
// then the smaller N.
double tinn_of(const std::vector<double>& rr) {
  const Histogram h = rr_histogram(rr);
  const double peak_t = (static_cast<double>(h.mode_k) + 0.5) * kHistBinMs;
  const double peak = h.mode_count;
  const long long k_min = h.k_min;
  const auto k_max = k_min + static_cast<long long>(h.counts.size()) - 1;

  double best_err = std::numeric_limits<double>::infinity();
  double best_n = 0.0, best_m = 0.0;
  for (long long kn = k_min; kn <= h.mode_k; ++kn) {
    const double n_edge = static_cast<double>(kn) * kHistBinMs;
    for (long long km = h.mode_k + 1; km <= k_max + 1; ++km) {
      const double m_edge = static_cast<double>(km) * kHistBinMs;
      double err = 0.0;
      for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double c =
            (static_cast<double>(k_min + static_cast<long long>(i)) + 0.5) *
            kHistBinMs;
        double q = 0.0;
        if (c > n_edge && c <= peak_t) {
          q = peak * (c - n_edge) / (peak_t - n_edge);
        } else if (c > peak_t && c < m_edge) {
          q = peak * (m_edge - c) / (m_edge - peak_t);
        }
        const double d = h.counts[i] - q;
        err += d * d;
      }
      const double width = m_edge - n_edge;
      const bool better =
          err < best_err ||
          (err == best_err && (width < best_m - best_n ||
                               (width == best_m - best_n && n_edge < best_n)));
      if (better) {
        best_err = err;
        best_n = n_edge;
        best_m = m_edge;
      }
    }
  }
  return best_m - best_n;
}

void validate_rr(const RRSeries& rr) {
  if (rr.intervals_ms.size() < 2) {
    throw InputError("hrv_features: need at least 2 RR intervals");
  }
  for (double x : rr.intervals_ms) {
    if (!(x > 200.0 && x < 3000.0)) {
      throw InputError("hrv_features: RR interval " + format_double(x) +
                       " ms outside the (200, 3000) gating band");
    }
  }
}

std::vector<FeatureDef> build_registry() {
  std::vector<FeatureDef> defs;
  const auto hrv = [&](const char* name, bool canonical) {
    defs.push_back({Modality::hrv, name, canonical});
  };
  const auto gsr = [&](const char* name, bool canonical) {
    defs.push_back({Modality::gsr, name, canonical});
  };
  hrv("mav", true);
  hrv("range", true);
  hrv("sdnn", true);
  hrv("rmssd", true);
  hrv("pnn50", true);
  hrv("tinn", true);
  hrv("meanhr", false);
  hrv("maxhr", false);
  hrv("minhr", false);
  hrv("sdsd", false);
  hrv("pnn20", false);
  hrv("nn50", false);
  hrv("cv", false);
  hrv("median", false);
  hrv("iqr", false);
  hrv("mad", false);
  hrv("skewness", false);
  hrv("kurtosis", false);
  hrv("triindex", false);
  hrv("sd1", false);
  hrv("sd2", false);
  hrv("sd1sd2ratio", false);
  gsr("mav", true);
  gsr("p2p", true);
  gsr("var", true);
  gsr("meanfreq", true);
  gsr("mean", false);
  gsr("sd", false);
  gsr("median", false);
  gsr("iqr", false);
  gsr("skewness", false);
  gsr("kurtosis", false);
  gsr("rms", false);
  gsr("linelength", false);
  gsr("mavfd", false);
  gsr("mavsd", false);
  gsr("derivmean", false);
  gsr("derivsd", false);
  gsr("medianfreq", false);
  gsr("peakfreq", false);
  gsr("spectralentropy", false);
  gsr("scrcount", false);
  return defs;
}

}  // namespace

const std::vector<FeatureDef>& feature_registry() {
  static const std::vector<FeatureDef> registry = build_registry();
  return registry;
}

std::size_t registry_size() { return feature_registry().size(); }

std::string feature_column(const FeatureDef& def) {
  return (def.modality == Modality::hrv ? "hrv_" : "gsr_") + def.name;
}

std::size_t feature_index(std::string_view column) {
  const auto& reg = feature_registry();
  for (std::size_t i = 0; i < reg.size(); ++i) {
    if (feature_column(reg[i]) == column) return i;
  }
  throw ConfigError("unknown feature column '" + std::string(column) + "'");
}

std::vector<std::size_t> detect_r_peaks(const Signal& ecg) {
  if (ecg.sampling_rate_hz <= 0.0) {
    throw InputError("detect_r_peaks: sampling_rate_hz must be > 0");
  }
  const double fs = ecg.sampling_rate_hz;
  const auto& x = ecg.samples;
  const std::size_t n = x.size();
  if (static_cast<double>(n) < 2.0 * fs) {
    throw InsufficientSignalError("detect_r_peaks: need at least 2 s of ECG");
  }
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw InputError("detect_r_peaks: non-finite ECG sample");
    }
  }

  // Energy envelope: centered derivative, squared, then a causal 150 ms
  // moving average.
  std::vector<double> m(n);
  {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d;
      if (i == 0) {
        d = x[1] - x[0];
      } else if (i + 1 == n) {
        d = x[n - 1] - x[n - 2];
      } else {
        d = 0.5 * (x[i + 1] - x[i - 1]);
      }
      s[i] = d * d;
    }
    const auto w =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.15 * fs)));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += s[i];
      if (i >= w) acc -= s[i - w];
      m[i] = acc / static_cast<double>(std::min(i + 1, w));
    }
  }

  const auto w =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.15 * fs)));
  const auto refractory =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.2 * fs)));

  const auto seed_end =
      std::min(n, static_cast<std::size_t>(std::llround(2.0 * fs)));
  double threshold = 0.0;
  for (std::size_t i = 0; i < seed_end; ++i) threshold = std::max(threshold, m[i]);
  threshold *= 0.5;

  std::vector<std::size_t> peaks;
  std::vector<double> recent_heights;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(m[i] > m[i - 1] && m[i] >= m[i + 1])) continue;
    if (!(m[i] > threshold)) continue;
    // The envelope peak lags the R wave by up to the integration window;
    // refine to the ECG maximum just behind it.
    const std::size_t lo = i >= w ? i - w : 0;
    const std::size_t hi = std::min(n - 1, i + 1);
    std::size_t r = lo;
    for (std::size_t j = lo + 1; j <= hi; ++j) {
      if (x[j] > x[r]) r = j;
    }
    if (!peaks.empty() &&
        (r <= peaks.back() || r - peaks.back() < refractory)) {
      continue;
    }
    peaks.push_back(r);
    recent_heights.push_back(m[i]);
    if (recent_heights.size() > 8) {
      recent_heights.erase(recent_heights.begin());
    }
    threshold = 0.5 * mean_of(recent_heights);
  }

  if (peaks.size() < 3) {
    throw InsufficientSignalError("detect_r_peaks: found " +
                                  std::to_string(peaks.size()) +
                                  " peaks, need at least 3");
  }
  return peaks;
}

RRSeries rr_from_peaks(const std::vector<std::size_t>& peaks, double fs_hz) {
  if (fs_hz <= 0.0) throw InputError("rr_from_peaks: fs must be > 0");
  if (peaks.size() < 3) {
    throw InsufficientSignalError("rr_from_peaks: need at least 3 peaks");
  }
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (peaks[i] <= peaks[i - 1]) {
      throw InputError("rr_from_peaks: peaks must be strictly increasing");
    }
  }
  RRSeries rr;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    const double ms =
        static_cast<double>(peaks[i] - peaks[i - 1]) * 1000.0 / fs_hz;
    if (ms > 200.0 && ms < 3000.0) rr.intervals_ms.push_back(ms);
  }
  if (rr.intervals_ms.size() < 2) {
    throw InsufficientSignalError(
        "rr_from_peaks: fewer than 2 intervals after artifact gating");
  }
  return rr;
}

std::vector<double> hrv_features(const RRSeries& rr) {
  validate_rr(rr);
  const auto& v = rr.intervals_ms;
  const double n = static_cast<double>(v.size());

  const double mav = mean_of(v);
  const auto [min_it, max_it] = std::minmax_element(v.begin(), v.end());
  const double range = *max_it - *min_it;
  const double sdnn = std::sqrt(population_variance(v));

  const std::vector<double> d = successive_diffs(v);
  double sq = 0.0;
  std::size_t over50 = 0, over20 = 0;
  for (double x : d) {
    sq += x * x;
    if (std::abs(x) > 50.0) ++over50;
    if (std::abs(x) > 20.0) ++over20;
  }
  const double nd = static_cast<double>(d.size());
  const double rmssd = std::sqrt(sq / nd);
  const double pnn50 = 100.0 * static_cast<double>(over50) / nd;
  const double pnn20 = 100.0 * static_cast<double>(over20) / nd;
  const double sdsd = std::sqrt(population_variance(d));

  std::vector<double> hr;
  hr.reserve(v.size());
  for (double x : v) hr.push_back(60000.0 / x);

  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  const double med = quantile_sorted(sorted, 0.5);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  std::vector<double> absdev;
  absdev.reserve(v.size());
  for (double x : v) absdev.push_back(std::abs(x - med));
  const double mad = median_of(std::move(absdev));

  const Histogram hist = rr_histogram(v);
  const double tri_index = n / hist.mode_count;

  const double sd1 = sdsd / std::numbers::sqrt2;
  const double sd2 = std::sqrt(std::max(0.0, 2.0 * sdnn * sdnn - sd1 * sd1));

  std::vector<double> out;
  out.reserve(22);
  out.push_back(mav);
  out.push_back(range);
  out.push_back(sdnn);
  out.push_back(rmssd);
  out.push_back(pnn50);
  out.push_back(tinn_of(v));
  out.push_back(mean_of(hr));
  out.push_back(60000.0 / *min_it);
  out.push_back(60000.0 / *max_it);
  out.push_back(sdsd);
  out.push_back(pnn20);
  out.push_back(static_cast<double>(over50));
  out.push_back(sdnn / mav);
  out.push_back(med);
  out.push_back(iqr);
  out.push_back(mad);
  out.push_back(skewness_of(v));
  out.push_back(kurtosis_of(v));
  out.push_back(tri_index);
  out.push_back(sd1);
  out.push_back(sd2);
  out.push_back(sd2 > 0.0 ? sd1 / sd2 : 0.0);
  return out;
}

std::vector<double> gsr_features(const Signal& window) {
  if (window.sampling_rate_hz <= 0.0 || window.samples.empty()) {
    throw InputError("gsr_features: empty window or bad sampling rate");
  }
  const auto& v = window.samples;
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError("gsr_features: non-finite sample");
  }
  const double fs = window.sampling_rate_hz;
  const std::size_t n = v.size();

  double abs_sum = 0.0, sq_sum = 0.0;
  for (double x : v) {
    abs_sum += std::abs(x);
    sq_sum += x * x;
  }
  const double mav = abs_sum / static_cast<double>(n);
  const auto [min_it, max_it] = std::minmax_element(v.begin(), v.end());
  const double p2p = *max_it - *min_it;
  const double var = population_variance(v);
  const bool constant = (p2p == 0.0);

  // Frequency-domain statistics over the one-sided periodogram, DC bin
  // excluded. All are defined as 0 for a constant window.
  double mean_freq = 0.0, median_freq = 0.0, peak_freq = 0.0, entropy = 0.0;
  if (!constant && n >= 2) {
    const auto spectrum = rfft(v);
    const std::size_t bins = n / 2;  // k = 1..n/2
    std::vector<double> power(bins);
    double total = 0.0;
    for (std::size_t k = 1; k <= bins; ++k) {
      power[k - 1] = std::norm(spectrum[k]);
      total += power[k - 1];
    }
    if (total > 0.0) {
      double weighted = 0.0;
      for (std::size_t k = 1; k <= bins; ++k) {
        weighted += (static_cast<double>(k) * fs / static_cast<double>(n)) *
                    power[k - 1];
      }
      mean_freq = weighted / total;

      double cum = 0.0;
      std::size_t med_k = bins;
      for (std::size_t k = 1; k <= bins; ++k) {
        cum += power[k - 1];
        if (cum >= 0.5 * total) {
          med_k = k;
          break;
        }
      }
      median_freq = static_cast<double>(med_k) * fs / static_cast<double>(n);

      std::size_t pk = 1;
      for (std::size_t k = 2; k <= bins; ++k) {
        if (power[k - 1] > power[pk - 1]) pk = k;
      }
      peak_freq = static_cast<double>(pk) * fs / static_cast<double>(n);

      if (bins > 1) {
        double h = 0.0;
        for (double p : power) {
          const double q = p / total;
          if (q > 0.0) h -= q * std::log(q);
        }
        entropy = h / std::log(static_cast<double>(bins));
      }
    }
  }

  const std::vector<double> d = successive_diffs(v);
  double line_length = 0.0;
  for (double x : d) line_length += std::abs(x);
  const double mavfd =
      d.empty() ? 0.0 : line_length / static_cast<double>(d.size());
  const std::vector<double> dd = successive_diffs(d);
  double mavsd = 0.0;
  if (!dd.empty()) {
    for (double x : dd) mavsd += std::abs(x);
    mavsd /= static_cast<double>(dd.size());
  }
  const double deriv_mean = d.empty() ? 0.0 : mean_of(d) * fs;
  const double deriv_sd =
      d.empty() ? 0.0 : std::sqrt(population_variance(d)) * fs;

  // Count of local maxima rising at least 0.01 uS above the preceding
  // trough, a conventional minimum skin-conductance-response amplitude.
  int scr = 0;
  if (!constant) {
    double run_min = v[0];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      run_min = std::min(run_min, v[i]);
      if (v[i] > v[i - 1] && v[i] >= v[i + 1] &&
          v[i] - run_min >= kScrMinRiseUs) {
        ++scr;
        run_min = v[i];
      }
    }
  }

  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> out;
  out.reserve(20);
  out.push_back(mav);
  out.push_back(p2p);
  out.push_back(var);
  out.push_back(mean_freq);
  out.push_back(mean_of(v));
  out.push_back(std::sqrt(var));
  out.push_back(quantile_sorted(sorted, 0.5));
  out.push_back(quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25));
  out.push_back(skewness_of(v));
  out.push_back(kurtosis_of(v));
  out.push_back(std::sqrt(sq_sum / static_cast<double>(n)));
  out.push_back(line_length);
  out.push_back(mavfd);
  out.push_back(mavsd);
  out.push_back(deriv_mean);
  out.push_back(deriv_sd);
  out.push_back(median_freq);
  out.push_back(peak_freq);
  out.push_back(entropy);
  out.push_back(static_cast<double>(scr));
  return out;
}

namespace {

struct TrialOutcome {
  std::vector<FeatureVector> rows;
  std::optional<SkipEntry> skip;
};

TrialOutcome extract_trial(const Trial& trial, const ExtractionConfig& config) {
  const std::string label = "subject " + std::to_string(trial.subject_id) +
                            " video " + std::to_string(trial.video_id);
  if ((trial.label_arousal != 0 && trial.label_arousal != 1) ||
      (trial.label_valence != 0 && trial.label_valence != 1)) {
    throw InputError("extract_matrix: " + label + " has non-binary labels");
  }
  const double dur_e = trial.ecg.duration_s();
  const double dur_g = trial.gsr.duration_s();
  if (std::abs(dur_e - dur_g) > 1e-6) {
    throw InputError("extract_matrix: " + label +
                     " ECG/GSR durations differ (" + format_double(dur_e) +
                     " vs " + format_double(dur_g) + " s)");
  }

  TrialOutcome outcome;
  const Signal ecg = apply_bandpass(trial.ecg, config.ecg_bandpass);
  const Signal gsr = apply_lowpass(trial.gsr, config.gsr_lowpass);

  std::vector<std::size_t> peaks;
  try {
    peaks = detect_r_peaks(ecg);
  } catch (const InsufficientSignalError& e) {
    outcome.skip = SkipEntry{trial.subject_id, trial.video_id,
                             std::string("peak detection failed: ") + e.what()};
    return outcome;
  }

  const double fs_e = ecg.sampling_rate_hz;
  const auto window_e =
      static_cast<std::size_t>(std::llround(config.window_s * fs_e));
  const auto shift_e =
      static_cast<std::size_t>(std::llround(config.shift_s * fs_e));
  if (window_e == 0 || shift_e == 0) {
    throw ConfigError("extract_matrix: window/shift below one ECG sample");
  }
  const std::vector<Signal> gsr_windows =
      segment_windows(gsr, config.window_s, config.shift_s);

  std::size_t n_windows_e = 0;
  for (std::size_t start = 0; start + window_e <= ecg.samples.size();
       start += shift_e) {
    ++n_windows_e;
  }
  const std::size_t n_windows = std::min(n_windows_e, gsr_windows.size());

  std::string first_failure;
  for (std::size_t wi = 0; wi < n_windows; ++wi) {
    const std::size_t start = wi * shift_e;
    const std::size_t end = start + window_e;
    std::vector<std::size_t> local;
    for (std::size_t p : peaks) {
      if (p >= start && p < end) local.push_back(p - start);
    }
    try {
      const RRSeries rr = rr_from_peaks(local, fs_e);
      FeatureVector row;
      row.subject_id = trial.subject_id;
      row.video_id = trial.video_id;
      row.window_index = static_cast<int>(wi);
      row.label_arousal = trial.label_arousal;
      row.label_valence = trial.label_valence;
      row.values = hrv_features(rr);
      const std::vector<double> g = gsr_features(gsr_windows[wi]);
      row.values.insert(row.values.end(), g.begin(), g.end());
      outcome.rows.push_back(std::move(row));
    } catch (const InsufficientSignalError& e) {
      if (first_failure.empty()) {
        first_failure =
            "window " + std::to_string(wi) + ": " + std::string(e.what());
      }
    }
  }

  if (outcome.rows.empty()) {
    std::string reason = "no valid windows";
    if (n_windows == 0) {
      reason += " (trial shorter than one window)";
    } else if (!first_failure.empty()) {
      reason += " (first failure: " + first_failure + ")";
    }
    outcome.skip = SkipEntry{trial.subject_id, trial.video_id, reason};
  }
  return outcome;
}

}  // namespace

ExtractionResult extract_matrix(const std::vector<Trial>& trials,
                                const ExtractionConfig& config) {
  if (config.window_s <= 0.0 || config.shift_s <= 0.0) {
    throw ConfigError("extract_matrix: window and shift must be > 0");
  }
  std::vector<TrialOutcome> outcomes(trials.size());
  const int jobs = config.jobs > 0 ? config.jobs : default_jobs();
  parallel_for(trials.size(), jobs, [&](std::size_t i) {
    outcomes[i] = extract_trial(trials[i], config);
  });

  ExtractionResult result;
  for (auto& o : outcomes) {
    for (auto& row : o.rows) result.matrix.rows.push_back(std::move(row));
    if (o.skip) result.skipped.push_back(std::move(*o.skip));
  }
  const auto row_key = [](const FeatureVector& r) {
    return std::tuple(r.subject_id, r.video_id, r.window_index);
  };
  std::sort(result.matrix.rows.begin(), result.matrix.rows.end(),
            [&](const FeatureVector& a, const FeatureVector& b) {
              return row_key(a) < row_key(b);
            });
  std::sort(result.skipped.begin(), result.skipped.end(),
            [](const SkipEntry& a, const SkipEntry& b) {
              return std::tuple(a.subject_id, a.video_id) <
                     std::tuple(b.subject_id, b.video_id);
            });
  return result;
}

FeatureMatrix normalize_per_subject(const FeatureMatrix& matrix) {
  if (matrix.rows.empty()) {
    throw InputError("normalize_per_subject: empty matrix");
  }
  const std::size_t width = registry_size();
  for (const auto& row : matrix.rows) {
    if (row.values.size() != width) {
      throw InputError("normalize_per_subject: row width mismatch");
    }
  }

  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
    by_subject[matrix.rows[i].subject_id].push_back(i);
  }

  FeatureMatrix out = matrix;
  for (const auto& [subject, rows] : by_subject) {
    for (std::size_t f = 0; f < width; ++f) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i : rows) {
        lo = std::min(lo, matrix.rows[i].values[f]);
        hi = std::max(hi, matrix.rows[i].values[f]);
      }
      const double span = hi - lo;
      for (std::size_t i : rows) {
        out.rows[i].values[f] =
            span > 0.0 ? (matrix.rows[i].values[f] - lo) / span : 0.0;
      }
    }
  }
  return out;
}

void write_feature_csv(const std::filesystem::path& path,
                       const FeatureMatrix& matrix) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write feature file " + path.string());
  out << "subject_id,video_id,window_index";
  for (const auto& def : feature_registry()) out << ',' << feature_column(def);
  out << ",arousal,valence\n";
  for (const auto& row : matrix.rows) {
    if (row.values.size() != registry_size()) {
      throw InputError("write_feature_csv: row width mismatch");
    }
    out << row.subject_id << ',' << row.video_id << ',' << row.window_index;
    for (double v : row.values) out << ',' << format_double(v);
    out << ',' << row.label_arousal << ',' << row.label_valence << '\n';
  }
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open feature file " + path.string());

  std::string expected = "subject_id,video_id,window_index";
  for (const auto& def : feature_registry()) expected += ',' + feature_column(def);
  expected += ",arousal,valence";

  std::string line;
  if (!std::getline(in, line) || trim(line) != expected) {
    throw IngestError("bad header in " + path.string());
  }

  FeatureMatrix matrix;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    const auto trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split_csv_line(trimmed);
    if (fields.size() != registry_size() + 5) {
      throw IngestError(path.string() + ":" + std::to_string(row_no) +
                        ": expected " + std::to_string(registry_size() + 5) +
                        " columns");
    }
    const std::string where = path.string() + ":" + std::to_string(row_no);
    FeatureVector row;
    row.subject_id = parse_int(trim(fields[0]), where);
    row.video_id = parse_int(trim(fields[1]), where);
    row.window_index = parse_int(trim(fields[2]), where);
    row.values.reserve(registry_size());
    for (std::size_t f = 0; f < registry_size(); ++f) {
      const double v = parse_double(trim(fields[3 + f]), where);
      if (!std::isfinite(v)) throw IngestError(where + ": non-finite feature");
      row.values.push_back(v);
    }
    row.label_arousal = parse_int(trim(fields[registry_size() + 3]), where);
    row.label_valence = parse_int(trim(fields[registry_size() + 4]), where);
    if ((row.label_arousal != 0 && row.label_arousal != 1) ||
        (row.label_valence != 0 && row.label_valence != 1)) {
      throw IngestError(where + ": labels must be 0 or 1");
    }
    matrix.rows.push_back(std::move(row));
  }
  return matrix;
}

void write_skip_report(const std::filesystem::path& path,
                       const std::vector<SkipEntry>& skipped) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write skip report " + path.string());
  out << "skipped_trials: " << skipped.size() << '\n';
  for (const auto& s : skipped) {
    out << "subject " << s.subject_id << " video " << s.video_id << ": "
        << s.reason << '\n';
  }
}

}  // namespace apex
