#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wht/dataset.hpp"
#include "wht/error.hpp"
#include "wht/signal.hpp"

namespace wht {

/// Rank over GF(2) of a set of bit-vector rows.
int gf2_rank(std::vector<std::uint64_t> rows);

/// Full-rank d_out x d_in binary matrix; row r bit c is the coefficient of
/// input index bit c in output bit r.
class LinearMap {
 public:
  LinearMap(int d_in, int d_out, std::vector<std::uint64_t> rows);

  int d_in() const noexcept { return d_in_; }
  int d_out() const noexcept { return d_out_; }
  const std::vector<std::uint64_t>& rows() const noexcept { return rows_; }

  /// L * j: output bit r is the parity of rows[r] & j.
  std::uint64_t apply(std::uint64_t j) const noexcept {
    std::uint64_t out = 0;
    for (int r = 0; r < d_out_; ++r) {
      out |= static_cast<std::uint64_t>(std::popcount(rows_[r] & j) & 1) << r;
    }
    return out;
  }

  /// L^T * i': XOR of the rows selected by the bits of i'.
  std::uint64_t transpose_apply(std::uint64_t reduced) const noexcept {
    std::uint64_t out = 0;
    for (int r = 0; r < d_out_; ++r) {
      if ((reduced >> r) & 1) out ^= rows_[r];
    }
    return out;
  }

  bool operator==(const LinearMap&) const = default;

 private:
  int d_in_;
  int d_out_;
  std::vector<std::uint64_t> rows_;
};

/// Uniform full-rank map by rejection sampling; deterministic in seed.
LinearMap random_full_rank(int d_in, int d_out, std::uint64_t seed);

/// Original Walsh index whose coefficient lands at folded index i'.
inline std::uint64_t folded_coefficient_index(const LinearMap& map, std::uint64_t reduced) {
  if (reduced >= dim_of(map.d_out())) {
    throw Error(Errc::BadArguments, "reduced index out of range");
  }
  return map.transpose_apply(reduced);
}

/// x'(j') = sum of x(j) over L j = j'. One linear scan of the input.
template <Scalar T>
std::vector<T> fold(std::span<const T> x, const LinearMap& map) {
  if (x.size() != dim_of(map.d_in())) {
    throw Error(Errc::DimMismatch, "fold expects 2^" + std::to_string(map.d_in()) +
                                       " samples, got " + std::to_string(x.size()));
  }
  std::vector<T> out(dim_of(map.d_out()), T{});
  for (std::uint64_t j = 0; j < x.size(); ++j) {
    T& slot = out[map.apply(j)];
    if constexpr (std::is_same_v<T, std::int64_t>) {
      if (__builtin_add_overflow(slot, x[j], &slot)) {
        throw Error(Errc::Overflow, "folded sum overflows int64");
      }
    } else {
      slot += x[j];
    }
  }
  return out;
}

template <Scalar T>
Signal<T> fold(const Signal<T>& x, const LinearMap& map) {
  return Signal<T>(fold<T>(x.values(), map), x.domain());
}

/// Streams a Time-domain dataset through fold into a new dataset at `out`.
DatasetFile fold_dataset(DatasetFile& in, const LinearMap& map, const std::filesystem::path& out,
                         std::uint64_t chunk = std::uint64_t{1} << 20);

/// Text form: d_out lines of d_in '0'/'1' characters; character c of a line
/// is input bit c (bit 0 least significant, leftmost).
std::string format_matrix(const LinearMap& map);
LinearMap parse_matrix(const std::string& text);
LinearMap load_matrix(const std::filesystem::path& path);
void save_matrix(const LinearMap& map, const std::filesystem::path& path);

struct CoverageResult {
  std::vector<double> per_trial;
  double mean = 0;
  double model = 0;       // 2^-d_in + (1 - 2^-d_in)(1 - (1 - p)^P)
  bool sampled = false;   // indices sampled instead of enumerated
};

/// Expected covered fraction for P independent uniform full-rank maps.
double coverage_model(int d_in, int d_out, int machines);

/// Per trial draws P maps and measures the fraction of original indices
/// lying in the union of their row spaces. Enumerates all 2^d_in indices
/// when d_in <= 24 and samples == 0; otherwise tests `samples` random
/// indices (default 65536). Map m of trial t depends only on (seed, t, m).
CoverageResult coverage_simulate(int d_in, int d_out, int machines, int trials, std::uint64_t seed,
                                 std::uint64_t samples = 0);

}  // namespace wht
