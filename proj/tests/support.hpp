#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testutil {

/// Sylvester construction H_{n+1} = [[H, H], [H, -H]], independent of the
/// library's index-parity formula.
inline std::vector<std::vector<int>> sylvester(int n) {
  std::vector<std::vector<int>> h{{1}};
  for (int k = 0; k < n; ++k) {
    const std::size_t m = h.size();
    std::vector<std::vector<int>> next(2 * m, std::vector<int>(2 * m));
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        next[r][c] = h[r][c];
        next[r][c + m] = h[r][c];
        next[r + m][c] = h[r][c];
        next[r + m][c + m] = -h[r][c];
      }
    }
    h = std::move(next);
  }
  return h;
}

template <typename T>
std::vector<T> matrix_wht(const std::vector<std::vector<int>>& h, const std::vector<T>& x) {
  std::vector<T> y(x.size(), T{});
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += h[i][j] * x[j];
  }
  return y;
}

inline std::vector<std::int64_t> random_ints(int n, std::int64_t bound, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> dist(-bound, bound);
  std::vector<std::int64_t> v(std::size_t{1} << n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline std::vector<double> random_reals(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(std::size_t{1} << n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "wht") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
