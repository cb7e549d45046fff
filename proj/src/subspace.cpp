#include "wht/subspace.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace wht {

int gf2_rank(std::vector<std::uint64_t> rows) {
  int rank = 0;
  for (int bit = 63; bit >= 0; --bit) {
    const std::uint64_t mask = std::uint64_t{1} << bit;
    auto pivot = std::find_if(rows.begin() + rank, rows.end(),
                              [mask](std::uint64_t r) { return (r & mask) != 0; });
    if (pivot == rows.end()) continue;
    std::iter_swap(rows.begin() + rank, pivot);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(i) != rank && (rows[i] & mask)) rows[i] ^= rows[rank];
    }
    ++rank;
  }
  return rank;
}

LinearMap::LinearMap(int d_in, int d_out, std::vector<std::uint64_t> rows)
    : d_in_(d_in), d_out_(d_out), rows_(std::move(rows)) {
  if (d_in < 0 || d_in > 62 || d_out < 0 || d_out > d_in) {
    throw Error(Errc::BadDims, "need 0 <= d_out <= d_in <= 62, got d_in = " +
                                   std::to_string(d_in) + ", d_out = " + std::to_string(d_out));
  }
  if (rows_.size() != static_cast<std::size_t>(d_out)) {
    throw Error(Errc::BadDims, "expected " + std::to_string(d_out) + " rows");
  }
  const std::uint64_t limit = dim_of(d_in);
  for (auto r : rows_) {
    if (r >= limit) throw Error(Errc::BadDims, "row has bits beyond d_in");
  }
  if (gf2_rank(rows_) != d_out) throw Error(Errc::BadDims, "map is not full rank");
}

namespace {

std::mt19937_64 seeded_engine(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

LinearMap sample_map(int d_in, int d_out, std::mt19937_64& rng) {
  const std::uint64_t mask = dim_of(d_in) - 1;
  std::vector<std::uint64_t> rows(static_cast<std::size_t>(d_out));
  for (;;) {
    for (auto& r : rows) r = rng() & mask;
    if (gf2_rank(rows) == d_out) return LinearMap(d_in, d_out, rows);
  }
}

void check_dims(int d_in, int d_out) {
  if (d_in < 0 || d_in > 62 || d_out < 0 || d_out > d_in) {
    throw Error(Errc::BadDims, "need 0 <= d_out <= d_in <= 62, got d_in = " +
                                   std::to_string(d_in) + ", d_out = " + std::to_string(d_out));
  }
}

/// Row-space membership via a reduced basis keyed by leading bit.
class RowSpace {
 public:
  explicit RowSpace(const LinearMap& map) {
    for (auto r : map.rows()) insert(r);
  }

  bool contains(std::uint64_t v) const {
    for (int bit = 63; bit >= 0 && v; --bit) {
      if (((v >> bit) & 1) == 0) continue;
      if (basis_[bit] == 0) return false;
      v ^= basis_[bit];
    }
    return v == 0;
  }

 private:
  void insert(std::uint64_t v) {
    for (int bit = 63; bit >= 0 && v; --bit) {
      if (((v >> bit) & 1) == 0) continue;
      if (basis_[bit] == 0) {
        basis_[bit] = v;
        return;
      }
      v ^= basis_[bit];
    }
  }

  std::array<std::uint64_t, 64> basis_{};
};

}  // namespace

LinearMap random_full_rank(int d_in, int d_out, std::uint64_t seed) {
  check_dims(d_in, d_out);
  auto rng = seeded_engine({seed});
  return sample_map(d_in, d_out, rng);
}

DatasetFile fold_dataset(DatasetFile& in, const LinearMap& map, const std::filesystem::path& out,
                         std::uint64_t chunk) {
  if (in.log2_dim() != map.d_in()) {
    throw Error(Errc::DimMismatch, "dataset has n = " + std::to_string(in.log2_dim()) +
                                       ", map expects d_in = " + std::to_string(map.d_in()));
  }
  if (in.domain() != Domain::Time) {
    throw Error(Errc::BadMetadata, "fold expects a time-domain dataset");
  }
  chunk = std::min<std::uint64_t>(std::max<std::uint64_t>(chunk, 1), in.size());

  auto run = [&]<typename T>(T) {
    std::vector<T> acc(dim_of(map.d_out()), T{});
    std::vector<T> buf(chunk);
    for (std::uint64_t start = 0; start < in.size(); start += chunk) {
      const std::span<T> part(buf.data(), std::min(chunk, in.size() - start));
      in.read_into<T>(start, part);
      for (std::uint64_t i = 0; i < part.size(); ++i) {
        T& slot = acc[map.apply(start + i)];
        if constexpr (std::is_same_v<T, std::int64_t>) {
          if (__builtin_add_overflow(slot, buf[i], &slot)) {
            throw Error(Errc::Overflow, "folded sum overflows int64");
          }
        } else {
          slot += buf[i];
        }
      }
    }
    return save_signal(out, Signal<T>(std::move(acc), Domain::Time));
  };
  if (in.kind() == ElementKind::Int64) return run(std::int64_t{});
  return run(double{});
}

std::string format_matrix(const LinearMap& map) {
  std::string s;
  for (auto row : map.rows()) {
    for (int c = 0; c < map.d_in(); ++c) s += ((row >> c) & 1) ? '1' : '0';
    s += '\n';
  }
  return s;
}

LinearMap parse_matrix(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::uint64_t> rows;
  int width = -1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (width < 0) width = static_cast<int>(line.size());
    if (static_cast<int>(line.size()) != width || width > 62) {
      throw Error(Errc::BadDims, "matrix rows must share one width <= 62");
    }
    std::uint64_t row = 0;
    for (int c = 0; c < width; ++c) {
      if (line[c] == '1') {
        row |= std::uint64_t{1} << c;
      } else if (line[c] != '0') {
        throw Error(Errc::BadDims, "matrix characters must be '0' or '1'");
      }
    }
    rows.push_back(row);
  }
  if (width < 0) throw Error(Errc::BadDims, "empty matrix");
  const int d_out = static_cast<int>(rows.size());
  return LinearMap(width, d_out, std::move(rows));
}

LinearMap load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read matrix " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matrix(ss.str());
}

void save_matrix(const LinearMap& map, const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) throw Error(Errc::PathExists, path.string());
  std::ofstream out(path);
  out << format_matrix(map);
  if (!out) throw Error(Errc::IoFailure, "cannot write matrix " + path.string());
}

double coverage_model(int d_in, int d_out, int machines) {
  const double total = std::exp2(d_in);
  const double p = (std::exp2(d_out) - 1.0) / (total - 1.0);
  if (d_in == 0) return 1.0;
  return 1.0 / total + (1.0 - 1.0 / total) * (1.0 - std::pow(1.0 - p, machines));
}

CoverageResult coverage_simulate(int d_in, int d_out, int machines, int trials, std::uint64_t seed,
                                 std::uint64_t samples) {
  check_dims(d_in, d_out);
  if (machines < 1 || trials < 1) throw Error(Errc::BadDims, "need machines >= 1 and trials >= 1");

  CoverageResult result;
  result.model = coverage_model(d_in, d_out, machines);
  result.sampled = d_in > 24 || samples > 0;
  if (result.sampled && samples == 0) samples = std::uint64_t{1} << 16;

  for (int t = 0; t < trials; ++t) {
    std::vector<LinearMap> maps;
    maps.reserve(static_cast<std::size_t>(machines));
    for (int m = 0; m < machines; ++m) {
      auto rng = seeded_engine({seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(m)});
      maps.push_back(sample_map(d_in, d_out, rng));
    }

    double covered_fraction = 0;
    if (!result.sampled) {
      std::vector<bool> covered(dim_of(d_in), false);
      std::uint64_t count = 0;
      for (const auto& map : maps) {
        // Gray-code walk over the row space: one XOR per element.
        std::uint64_t v = 0;
        const std::uint64_t span_size = dim_of(d_out);
        for (std::uint64_t i = 0; i < span_size; ++i) {
          if (i > 0) v ^= map.rows()[static_cast<std::size_t>(std::countr_zero(i))];
          if (!covered[v]) {
            covered[v] = true;
            ++count;
          }
        }
      }
      covered_fraction = static_cast<double>(count) / static_cast<double>(dim_of(d_in));
    } else {
      std::vector<RowSpace> spaces(maps.begin(), maps.end());
      auto rng = seeded_engine({seed, static_cast<std::uint64_t>(t), ~std::uint64_t{0}});
      const std::uint64_t mask = dim_of(d_in) - 1;
      std::uint64_t hits = 0;
      for (std::uint64_t s = 0; s < samples; ++s) {
        const std::uint64_t v = rng() & mask;
        for (const auto& space : spaces) {
          if (space.contains(v)) {
            ++hits;
            break;
          }
        }
      }
      covered_fraction = static_cast<double>(hits) / static_cast<double>(samples);
    }
    result.per_trial.push_back(covered_fraction);
  }
  double sum = 0;
  for (double c : result.per_trial) sum += c;
  result.mean = sum / trials;
  return result;
}

}  // namespace wht
