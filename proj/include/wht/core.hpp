#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>

#include "wht/error.hpp"
#include "wht/signal.hpp"

namespace wht {

/// Default largest n accepted by the O(4^n) reference transform.
inline constexpr int kDefaultOracleLimit = 14;

/// Sign exponent of the (i, j) Hadamard entry: parity of popcount(i & j).
constexpr int inner_product(std::uint64_t i, std::uint64_t j) noexcept {
  return std::popcount(i & j) & 1;
}

/// One butterfly (a, b) -> (a + b, a - b) at buf[pt], buf[pt + stride].
template <Scalar T>
inline void butterfly(std::span<T> buf, std::uint64_t pt, std::uint64_t stride) noexcept {
  const T a = buf[pt];
  const T b = buf[pt + stride];
  buf[pt] = a + b;
  buf[pt + stride] = a - b;
}

/// `count` butterflies at consecutive pt starting from pt0, all at the same
/// stride. The caller guarantees no pt in the run has bit log2(stride) set.
template <Scalar T>
inline void butterfly_run(std::span<T> buf, std::uint64_t pt0, std::uint64_t stride,
                          std::uint64_t count) noexcept {
  T* lo = buf.data() + pt0;
  T* hi = lo + stride;
  for (std::uint64_t i = 0; i < count; ++i) {
    const T a = lo[i];
    const T b = hi[i];
    lo[i] = a + b;
    hi[i] = a - b;
  }
}

/// Runs stage k (stride 2^k) over the whole buffer in the pointer-walk order:
/// pt advances by one and jumps over the partner half whenever its low k bits
/// wrap to zero. Returns the number of butterflies (always size/2).
template <Scalar T>
std::uint64_t fwht_stage(std::span<T> buf, int k) noexcept {
  const std::uint64_t half = buf.size() / 2;
  const std::uint64_t j = std::uint64_t{1} << k;
  const std::uint64_t low_mask = j - 1;
  std::uint64_t pt = 0;
  for (std::uint64_t i = 0; i < half; ++i) {
    butterfly(buf, pt, j);
    ++pt;
    if ((pt & low_mask) == 0) pt += j;
  }
  return half;
}

/// In-place WHT without the overflow precondition. Returns butterfly count.
template <Scalar T>
std::uint64_t fwht_inplace_unchecked(std::span<T> buf) noexcept {
  const int n = std::countr_zero(buf.size());
  std::uint64_t butterflies = 0;
  for (int k = 0; k < n; ++k) butterflies += fwht_stage(buf, k);
  return butterflies;
}

/// In-place WHT of a power-of-two buffer in natural (Hadamard) order.
/// Returns the number of butterflies executed, n * 2^(n-1).
template <Scalar T>
std::uint64_t fwht_inplace(std::span<T> buf) {
  const int n = log2_exact(buf.size());
  check_overflow<T>(buf, n);
  return fwht_inplace_unchecked(buf);
}

template <Scalar T>
std::uint64_t fwht_inplace(Signal<T>& sig) {
  check_overflow<T>(sig.values(), sig.log2_dim(), sig.registered_bound());
  const auto count = fwht_inplace_unchecked(sig.values());
  sig.set_domain(flipped(sig.domain()));
  return count;
}

/// Reference transform by direct summation over every (i, j) pair.
template <Scalar T>
Signal<T> wht_bruteforce(const Signal<T>& sig, int oracle_limit = kDefaultOracleLimit) {
  const int n = sig.log2_dim();
  if (n > oracle_limit) {
    throw Error(Errc::OracleTooLarge,
                "n = " + std::to_string(n) + " exceeds oracle limit " + std::to_string(oracle_limit));
  }
  check_overflow<T>(sig.values(), n, sig.registered_bound());
  const std::uint64_t size = sig.size();
  auto out = Signal<T>::zeros(n, flipped(sig.domain()));
  for (std::uint64_t i = 0; i < size; ++i) {
    T acc{};
    for (std::uint64_t j = 0; j < size; ++j) {
      acc += inner_product(i, j) ? -sig[j] : sig[j];
    }
    out[i] = acc;
  }
  return out;
}

/// Divides every element by 2^n. Int64 requires exact divisibility.
template <Scalar T>
void scale_down(std::span<T> buf, int log2_dim) {
  if constexpr (std::is_same_v<T, std::int64_t>) {
    const std::int64_t mask = (std::int64_t{1} << log2_dim) - 1;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      if ((buf[i] & mask) != 0) {
        throw Error(Errc::InexactDivision, "element " + std::to_string(i) + " = " +
                                               std::to_string(buf[i]) + " is not divisible by 2^" +
                                               std::to_string(log2_dim));
      }
    }
    for (auto& v : buf) v /= (std::int64_t{1} << log2_dim);
  } else {
    const double scale = std::ldexp(1.0, -log2_dim);
    for (auto& v : buf) v *= scale;
  }
}

/// Inverse transform in place. On InexactDivision the buffer is left holding
/// the (unscaled) forward transform; use inverse_wht for value semantics.
template <Scalar T>
void inverse_wht_inplace(std::span<T> buf) {
  const int n = log2_exact(buf.size());
  fwht_inplace(buf);
  scale_down(buf, n);
}

template <Scalar T>
Signal<T> inverse_wht(Signal<T> sig) {
  inverse_wht_inplace(sig.values());
  sig.set_domain(flipped(sig.domain()));
  return sig;
}

__extension__ using uint128_t = unsigned __int128;

template <Scalar T>
using energy_t = std::conditional_t<std::is_same_v<T, std::int64_t>, uint128_t, double>;

/// Sum of squares. Int64 accumulates in 128-bit and throws on overflow.
template <Scalar T>
energy_t<T> parseval_energy(std::span<const T> buf) {
  if constexpr (std::is_same_v<T, std::int64_t>) {
    uint128_t acc = 0;
    for (std::int64_t v : buf) {
      const auto mag = v < 0 ? std::uint64_t(0) - std::uint64_t(v) : std::uint64_t(v);
      const uint128_t sq = static_cast<uint128_t>(mag) * mag;
      if (__builtin_add_overflow(acc, sq, &acc)) {
        throw Error(Errc::Overflow, "energy exceeds 128-bit accumulator");
      }
    }
    return acc;
  } else {
    double acc = 0.0;
    for (double v : buf) acc += v * v;
    return acc;
  }
}

template <Scalar T>
energy_t<T> parseval_energy(const Signal<T>& sig) {
  return parseval_energy<T>(sig.values());
}

}  // namespace wht
