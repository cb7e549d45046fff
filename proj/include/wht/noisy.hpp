#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wht/dataset.hpp"
#include "wht/signal.hpp"

namespace wht {

enum class NoiseKind { None, Uniform, Gaussian, Rademacher };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

struct SupportEntry {
  std::uint64_t index = 0;
  double amplitude = 0;
};

/// Sparse Walsh-domain ground truth plus i.i.d. time-domain noise of
/// per-sample standard deviation sigma.
struct NoisySignalSpec {
  int log2_dim = 0;
  std::vector<SupportEntry> support;
  NoiseKind noise = NoiseKind::None;
  double sigma = 0;
  std::uint64_t seed = 0;

  /// Throws BadSpec on repeated or out-of-range indices, sigma < 0, or
  /// non-finite amplitudes.
  void validate() const;
};

struct GeneratedSignal {
  RealSignal clean;   // Walsh transform equals the planted support exactly
  RealSignal noisy;   // clean + noise
};

GeneratedSignal gen(const NoisySignalSpec& spec);

/// Integer version of the clean signal; needs every amplitude to be a
/// multiple of 2^n (BadSpec otherwise).
IntSignal gen_clean_exact(const NoisySignalSpec& spec);

/// 2^n i.i.d. samples: Uniform on [-sigma*sqrt(3), sigma*sqrt(3)],
/// Gaussian N(0, sigma^2), or Rademacher +-sigma. Deterministic in `seed`.
std::vector<double> make_noise(int log2_dim, NoiseKind kind, double sigma, std::uint64_t seed);

enum class LogBase { Natural, Two };

/// 10 log10(8 log(2) / 2^n) dB; with base two the log term is exactly 8.
double significance_threshold_db(int log2_dim, LogBase base = LogBase::Natural);

struct SnrReport {
  double snr_linear = 0;
  double snr_db = 0;
  double signal_energy = 0;          // squared norm of the clean Walsh spectrum
  double noise_walsh_variance = 0;   // 2^n sigma^2
  double threshold_db_natural = 0;
  double threshold_db_log2 = 0;
  bool infinite = false;             // sigma == 0
  bool above_threshold = false;      // snr_db above the natural-log threshold
};

/// SNR = ||x_hat||^2 / (2^n * 2^n sigma^2), with ||x_hat||^2 = 2^n ||x||^2.
SnrReport snr(std::span<const double> clean_time, double sigma);
SnrReport snr(const RealSignal& clean_time, double sigma);

template <Scalar T>
struct Coefficient {
  std::uint64_t index = 0;
  T value{};
  bool operator==(const Coefficient&) const = default;
};

namespace detail {
template <Scalar T>
long double magnitude(T v) {
  return std::fabs(static_cast<long double>(v));
}
}  // namespace detail

/// Orders by descending |value|, then ascending index.
template <Scalar T>
void sort_coefficients(std::vector<Coefficient<T>>& out) {
  std::sort(out.begin(), out.end(), [](const Coefficient<T>& a, const Coefficient<T>& b) {
    const auto ma = detail::magnitude(a.value);
    const auto mb = detail::magnitude(b.value);
    if (ma != mb) return ma > mb;
    return a.index < b.index;
  });
}

/// Appends every (offset + i, walsh[i]) with |walsh[i]| >= tau, unsorted.
template <Scalar T>
void collect_above(std::span<const T> walsh, double tau, std::uint64_t offset,
                   std::vector<Coefficient<T>>& out) {
  const long double t = tau;
  for (std::size_t i = 0; i < walsh.size(); ++i) {
    if (detail::magnitude(walsh[i]) >= t) out.push_back({offset + i, walsh[i]});
  }
}

/// All coefficients with |y_i| >= tau, sorted by descending magnitude.
template <Scalar T>
std::vector<Coefficient<T>> extract_above(std::span<const T> walsh, double tau) {
  if (!(tau >= 0)) throw Error(Errc::BadArguments, "threshold must be >= 0");
  std::vector<Coefficient<T>> out;
  collect_above(walsh, tau, 0, out);
  sort_coefficients(out);
  return out;
}

/// Streaming variant over a dataset, reading `chunk` elements at a time.
template <Scalar T>
std::vector<Coefficient<T>> extract_above(DatasetFile& ds, double tau,
                                          std::uint64_t chunk = std::uint64_t{1} << 20) {
  if (!(tau >= 0)) throw Error(Errc::BadArguments, "threshold must be >= 0");
  chunk = std::min<std::uint64_t>(std::max<std::uint64_t>(chunk, 1), ds.size());
  std::vector<Coefficient<T>> out;
  std::vector<T> buf(chunk);
  for (std::uint64_t start = 0; start < ds.size(); start += chunk) {
    const std::span<T> part(buf.data(), std::min(chunk, ds.size() - start));
    ds.read_into<T>(start, part);
    collect_above<T>(std::span<const T>(part), tau, start, out);
  }
  sort_coefficients(out);
  return out;
}

/// Monte Carlo mean of the per-coefficient variance of WHT(noise).
double noise_walsh_variance_check(int log2_dim, double sigma, NoiseKind kind, int trials,
                                  std::uint64_t seed);

}  // namespace wht
