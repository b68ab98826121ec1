#pragma once

#include <map>
#include <string>

#include "tjepa/tape.hpp"

namespace tjepa {

// Named parameter store. Each parameter's initial values depend only on
// (seed, name), so shared names initialize identically across model variants.
template <typename T>
struct ParamSet {
  std::map<std::string, Arr<T>> values;

  bool has(const std::string& name) const { return values.count(name) > 0; }
  Arr<T>& at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const Arr<T>& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  void add(const std::string& name, Arr<T> v) {
    if (has(name)) throw ConfigError("duplicate parameter: " + name);
    values.emplace(name, std::move(v));
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& [k, v] : values) n += v.n();
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [k, v] : values) out.values.emplace(k, v.template cast<U>());
    return out;
  }
};

template <typename T>
Arr<T> xavier_init(uint64_t seed, const std::string& name, int in, int out) {
  std::mt19937_64 rng = seeded_rng(seed, name);
  const T a = static_cast<T>(std::sqrt(6.0 / (in + out)));
  return Arr<T>::uniform(Shape{in, out}, rng, -a, a);
}

template <typename T>
Arr<T> normal_init(uint64_t seed, const std::string& name, Shape shape, T stddev) {
  std::mt19937_64 rng = seeded_rng(seed, name);
  return Arr<T>::randn(std::move(shape), rng, stddev);
}

// Parameters leafed into a live tape; lookups by name.
template <typename T>
struct Bound {
  Tape<T>* tape = nullptr;
  std::map<std::string, int> ids;

  int operator()(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw ConfigError("parameter not bound: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return ids.count(name) > 0; }
};

template <typename T>
Bound<T> bind_params(Tape<T>& t, const ParamSet<T>& ps, bool requires_grad = true) {
  Bound<T> b;
  b.tape = &t;
  for (const auto& [name, arr] : ps.values) b.ids.emplace(name, t.leaf(arr, requires_grad));
  return b;
}

// SGD with momentum; learning rate chosen per parameter name.
template <typename T>
struct SgdMomentum {
  T momentum = T(0.9);
  std::map<std::string, Arr<T>> velocity;

  template <typename LrFn>
  void step(ParamSet<T>& params, const Tape<T>& tape, const Bound<T>& bound, LrFn lr_for) {
    for (auto& [name, value] : params.values) {
      const int id = bound(name);
      if (!tape.has_grad(id)) continue;  // parameter unused by this loss
      const Arr<T>& g = tape.grad(id);
      auto [it, fresh] = velocity.try_emplace(name, Arr<T>::zeros(value.shape));
      Arr<T>& v = it->second;
      const T lr = lr_for(name);
      for (int64_t i = 0; i < value.n(); ++i) {
        v[i] = momentum * v[i] + g[i];
        value[i] -= lr * v[i];
      }
    }
  }
};

}  // namespace tjepa
