#pragma once

#include <algorithm>
#include <bit>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "wht/error.hpp"

namespace wht {

/// Element types a transform can run on: exact 64-bit integers or doubles.
template <typename T>
concept Scalar = std::same_as<T, std::int64_t> || std::same_as<T, double>;

enum class ElementKind { Int64, Float64 };
enum class Domain { Time, Walsh };

template <Scalar T>
constexpr ElementKind element_kind_of() {
  return std::is_same_v<T, std::int64_t> ? ElementKind::Int64 : ElementKind::Float64;
}

inline std::string to_string(ElementKind k) { return k == ElementKind::Int64 ? "int64" : "float64"; }
inline std::string to_string(Domain d) { return d == Domain::Time ? "time" : "walsh"; }

inline Domain flipped(Domain d) { return d == Domain::Time ? Domain::Walsh : Domain::Time; }

constexpr std::uint64_t dim_of(int log2_dim) { return std::uint64_t{1} << log2_dim; }

/// log2 of a power-of-two length; throws BadArguments otherwise.
inline int log2_exact(std::size_t len) {
  if (len == 0 || !std::has_single_bit(len)) {
    throw Error(Errc::BadArguments, "length " + std::to_string(len) + " is not a power of two");
  }
  return std::countr_zero(len);
}

/// Largest |x| in the data, as an unsigned value (|INT64_MIN| is representable).
inline std::uint64_t max_magnitude(std::span<const std::int64_t> data) {
  std::uint64_t m = 0;
  for (std::int64_t v : data) {
    const auto mag = v < 0 ? std::uint64_t(0) - std::uint64_t(v) : std::uint64_t(v);
    m = std::max(m, mag);
  }
  return m;
}

/// True when every intermediate of a 2^n-point transform with inputs bounded
/// by `bound` stays below 2^63.
constexpr bool magnitude_bound_ok(std::uint64_t bound, int log2_dim) {
  if (bound == 0) return true;
  if (log2_dim >= 63) return false;
  return bound < (std::uint64_t{1} << (63 - log2_dim));
}

inline void require_magnitude_bound(std::uint64_t bound, int log2_dim) {
  if (!magnitude_bound_ok(bound, log2_dim)) {
    throw Error(Errc::Overflow, "magnitude bound " + std::to_string(bound) + " times 2^" +
                                    std::to_string(log2_dim) + " does not fit in 63 bits");
  }
}

/// Dense signal of 2^n scalars tagged with the domain it lives in.
template <Scalar T>
class Signal {
 public:
  using value_type = T;

  Signal() : data_(1, T{}) {}

  explicit Signal(std::vector<T> data, Domain domain = Domain::Time)
      : log2_dim_(log2_exact(data.size())), domain_(domain), data_(std::move(data)) {}

  static Signal zeros(int log2_dim, Domain domain = Domain::Time) {
    if (log2_dim < 0 || log2_dim > 40) {
      throw Error(Errc::BadArguments, "log2 dimension out of range: " + std::to_string(log2_dim));
    }
    return Signal(std::vector<T>(dim_of(log2_dim), T{}), domain);
  }

  int log2_dim() const noexcept { return log2_dim_; }
  std::size_t size() const noexcept { return data_.size(); }
  Domain domain() const noexcept { return domain_; }
  void set_domain(Domain d) noexcept { domain_ = d; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& vector() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Registers an upper bound on |x|; only meaningful for Int64 signals.
  void register_bound(std::uint64_t bound) { bound_ = bound; }
  std::optional<std::uint64_t> registered_bound() const noexcept { return bound_; }

  bool operator==(const Signal& other) const {
    return log2_dim_ == other.log2_dim_ && domain_ == other.domain_ && data_ == other.data_;
  }

 private:
  int log2_dim_ = 0;
  Domain domain_ = Domain::Time;
  std::vector<T> data_;
  std::optional<std::uint64_t> bound_;
};

using IntSignal = Signal<std::int64_t>;
using RealSignal = Signal<double>;

/// Checks the overflow precondition for Int64 data; no-op for doubles.
template <Scalar T>
void check_overflow(std::span<const T> data, int log2_dim,
                    std::optional<std::uint64_t> registered = std::nullopt) {
  if constexpr (std::is_same_v<T, std::int64_t>) {
    const std::uint64_t bound = registered ? *registered : max_magnitude(data);
    require_magnitude_bound(bound, log2_dim);
  }
}

}  // namespace wht
