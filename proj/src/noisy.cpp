#include "wht/noisy.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

#include "wht/core.hpp"

namespace wht {

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::None: return "none";
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Rademacher: return "rademacher";
  }
  return "none";
}

NoiseKind parse_noise_kind(const std::string& text) {
  if (text == "none") return NoiseKind::None;
  if (text == "uniform") return NoiseKind::Uniform;
  if (text == "gaussian") return NoiseKind::Gaussian;
  if (text == "rademacher") return NoiseKind::Rademacher;
  throw Error(Errc::BadArguments, "unknown noise kind '" + text + "'");
}

void NoisySignalSpec::validate() const {
  if (log2_dim < 0 || log2_dim > 40) {
    throw Error(Errc::BadSpec, "log2 dimension out of range: " + std::to_string(log2_dim));
  }
  if (support.size() > dim_of(log2_dim)) throw Error(Errc::BadSpec, "support larger than 2^n");
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw Error(Errc::BadSpec, "sigma must be >= 0");
  std::unordered_set<std::uint64_t> seen;
  for (const auto& e : support) {
    if (e.index >= dim_of(log2_dim)) {
      throw Error(Errc::BadSpec, "support index " + std::to_string(e.index) + " >= 2^n");
    }
    if (!seen.insert(e.index).second) {
      throw Error(Errc::BadSpec, "support index " + std::to_string(e.index) + " repeated");
    }
    if (!std::isfinite(e.amplitude)) throw Error(Errc::BadSpec, "non-finite amplitude");
  }
}

std::vector<double> make_noise(int log2_dim, NoiseKind kind, double sigma, std::uint64_t seed) {
  std::vector<double> w(dim_of(log2_dim), 0.0);
  if (kind == NoiseKind::None || sigma == 0) return w;
  std::mt19937_64 rng(seed);
  switch (kind) {
    case NoiseKind::Uniform: {
      const double half_width = sigma * std::sqrt(3.0);
      std::uniform_real_distribution<double> dist(-half_width, half_width);
      for (auto& v : w) v = dist(rng);
      break;
    }
    case NoiseKind::Gaussian: {
      std::normal_distribution<double> dist(0.0, sigma);
      for (auto& v : w) v = dist(rng);
      break;
    }
    case NoiseKind::Rademacher:
      // Top bit of the raw engine output keeps the sequence library-independent.
      for (auto& v : w) v = (rng() >> 63) ? sigma : -sigma;
      break;
    case NoiseKind::None:
      break;
  }
  return w;
}

GeneratedSignal gen(const NoisySignalSpec& spec) {
  spec.validate();
  auto walsh = RealSignal::zeros(spec.log2_dim, Domain::Walsh);
  for (const auto& e : spec.support) walsh[e.index] = e.amplitude;
  RealSignal clean = inverse_wht(std::move(walsh));

  std::vector<double> noisy(clean.vector());
  const auto w = make_noise(spec.log2_dim, spec.noise, spec.sigma, spec.seed);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += w[i];
  return {std::move(clean), RealSignal(std::move(noisy), Domain::Time)};
}

IntSignal gen_clean_exact(const NoisySignalSpec& spec) {
  spec.validate();
  auto walsh = IntSignal::zeros(spec.log2_dim, Domain::Walsh);
  const double scale = std::ldexp(1.0, spec.log2_dim);
  for (const auto& e : spec.support) {
    const double q = e.amplitude / scale;
    if (q != std::trunc(q) || std::fabs(e.amplitude) >= 0x1p62) {
      throw Error(Errc::BadSpec, "amplitude " + std::to_string(e.amplitude) +
                                     " is not an integer multiple of 2^n");
    }
    walsh[e.index] = static_cast<std::int64_t>(e.amplitude);
  }
  try {
    return inverse_wht(std::move(walsh));
  } catch (const Error& e) {
    throw Error(Errc::BadSpec, e.what());
  }
}

double significance_threshold_db(int log2_dim, LogBase base) {
  if (log2_dim < 1) throw Error(Errc::BadArguments, "significance threshold needs n >= 1");
  const double log_two = base == LogBase::Natural ? std::log(2.0) : 1.0;
  return 10.0 * (std::log10(8.0 * log_two) - log2_dim * std::log10(2.0));
}

SnrReport snr(std::span<const double> clean_time, double sigma) {
  const int n = log2_exact(clean_time.size());
  if (!(sigma >= 0)) throw Error(Errc::BadArguments, "sigma must be >= 0");
  SnrReport r;
  r.signal_energy = std::ldexp(parseval_energy<double>(clean_time), n);
  r.noise_walsh_variance = std::ldexp(sigma * sigma, n);
  if (n >= 1) {
    r.threshold_db_natural = significance_threshold_db(n, LogBase::Natural);
    r.threshold_db_log2 = significance_threshold_db(n, LogBase::Two);
  }
  if (sigma == 0) {
    r.infinite = true;
    r.snr_linear = std::numeric_limits<double>::infinity();
    r.snr_db = std::numeric_limits<double>::infinity();
    r.above_threshold = true;
    return r;
  }
  r.snr_linear = r.signal_energy / std::ldexp(r.noise_walsh_variance, n);
  r.snr_db = 10.0 * std::log10(r.snr_linear);
  r.above_threshold = n >= 1 && r.snr_db > r.threshold_db_natural;
  return r;
}

SnrReport snr(const RealSignal& clean_time, double sigma) { return snr(clean_time.values(), sigma); }

double noise_walsh_variance_check(int log2_dim, double sigma, NoiseKind kind, int trials,
                                  std::uint64_t seed) {
  if (trials < 1) throw Error(Errc::BadArguments, "need at least one trial");
  if (!(sigma >= 0)) throw Error(Errc::BadArguments, "sigma must be >= 0");
  double total = 0;
  for (int t = 0; t < trials; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    const std::uint64_t trial_seed = (std::uint64_t{words[0]} << 32) | words[1];
    auto w = make_noise(log2_dim, kind, sigma, trial_seed);
    fwht_inplace(std::span<double>(w));
    total += parseval_energy(std::span<const double>(w)) / static_cast<double>(w.size());
  }
  return total / trials;
}

}  // namespace wht
