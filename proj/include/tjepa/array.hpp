#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tjepa/errors.hpp"

namespace tjepa {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Dense row-major array of real values.
template <typename T>
struct Arr {
  Shape shape;
  std::vector<T> data;

  Arr() = default;
  explicit Arr(Shape s, T fill = T(0)) : shape(std::move(s)) {
    for (int d : shape) {
      if (d <= 0) throw ShapeError("array extent must be positive, got shape " + shape_str(shape));
    }
    data.assign(static_cast<size_t>(shape_numel(shape)), fill);
  }
  Arr(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
      throw ShapeError("data size does not match shape " + shape_str(shape));
    }
  }

  int64_t n() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Strided accessors for the common ranks.
  T& at2(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  const T& at2(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  T& at3(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const T& at3(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  T& at4(int i, int j, int k, int l) {
    return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const T& at4(int i, int j, int k, int l) const {
    return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Arr<U> cast() const {
    Arr<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  static Arr zeros(Shape s) { return Arr(std::move(s)); }
  static Arr full(Shape s, T v) { return Arr(std::move(s), v); }
  static Arr randn(Shape s, std::mt19937_64& rng, T stddev = T(1)) {
    Arr out(std::move(s));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : out.data) v = static_cast<T>(nd(rng)) * stddev;
    return out;
  }
  static Arr uniform(Shape s, std::mt19937_64& rng, T lo, T hi) {
    Arr out(std::move(s));
    std::uniform_real_distribution<double> ud(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : out.data) v = static_cast<T>(ud(rng));
    return out;
  }
};

using ArrF = Arr<float>;
using ArrD = Arr<double>;

// FNV-1a, used to derive per-name parameter seeds.
inline uint64_t fnv1a(const std::string& s, uint64_t seed = 1469598103934665603ull) {
  uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::mt19937_64 seeded_rng(uint64_t seed, const std::string& tag) {
  return std::mt19937_64(fnv1a(tag, seed ^ 0x9e3779b97f4a7c15ull));
}

}  // namespace tjepa
