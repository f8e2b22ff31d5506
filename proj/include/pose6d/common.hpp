// Shared plumbing: error types, image container, axis-aligned boxes,
// a deterministic RNG and a small indexed thread pool.
//
// Pixel conventions used throughout: pixel (i, j) covers the unit square
// [i, i+1) x [j, j+1) and its center lies at (i + 0.5, j + 0.5). Image x
// grows right, y grows down.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pose6d {

// Invalid configuration (bad parameters, inconsistent settings). CLI exit 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or missing input data (files, tensors, datasets). CLI exit 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> px;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), px(size_t(w) * size_t(h), fill) {}

  bool empty() const { return px.empty(); }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  T& at(int x, int y) { return px[size_t(y) * width + x]; }
  const T& at(int x, int y) const { return px[size_t(y) * width + x]; }
};

// Axis-aligned box in continuous pixel coordinates, corners (x0,y0)-(x1,y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double diagonal() const { return std::hypot(width(), height()); }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool valid() const { return x1 > x0 && y1 > y0; }
};

// Intersection-over-union of two boxes; an empty union gives 0.
inline double box_iou(const Box& a, const Box& b) {
  double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline Box clamp_box(const Box& b, int image_width, int image_height) {
  Box r;
  r.x0 = std::clamp(b.x0, 0.0, double(image_width));
  r.x1 = std::clamp(b.x1, 0.0, double(image_width));
  r.y0 = std::clamp(b.y0, 0.0, double(image_height));
  r.y1 = std::clamp(b.y1, 0.0, double(image_height));
  return r;
}

// Deterministic RNG: splitmix64 core with explicit uniform / Box-Muller
// transforms. Standard-library distributions are implementation-defined and
// would break byte-identical reruns across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    return int((__uint128_t(next_u64()) * __uint128_t(uint64_t(n))) >> 64);
  }

  // Box-Muller, pair cached.
  double normal(double mu = 0.0, double sigma = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mu + sigma * spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mu + sigma * r * std::cos(a);
  }

  // Independent stream derived from this seed and a salt; the parent state
  // is not advanced, so forks are order-free.
  Rng fork(uint64_t salt) const {
    uint64_t z = state_ ^ (0x9e3779b97f4a7c15ULL + salt * 0xd1342543de82ef95ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return Rng(z ^ (z >> 27));
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Runs fn(i) for i in [0, n) across up to `threads` workers in contiguous
// chunks. Determinism contract: workers only write to per-index slots, so the
// result is identical for any thread count. First exception is rethrown.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  int workers = std::max(1, std::min<int>(threads, int(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    size_t lo = size_t(w) * chunk;
    size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace pose6d
