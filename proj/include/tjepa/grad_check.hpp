#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tjepa/tape.hpp"

namespace tjepa {

struct GradCheckReport {
  bool ok = false;
  bool probe_failure = false;  // non-finite value hit while probing
  double max_rel_err = 0.0;
  std::string worst;
  int n_checked = 0;
};

// Compares reverse-mode gradients against central finite differences for a
// scalar function built on a fresh tape from the given inputs. Double
// precision only; returns a report instead of throwing on bad probes.
using ScalarFn = std::function<int(TapeD&, const std::vector<int>&)>;

inline GradCheckReport grad_check(const ScalarFn& f, std::vector<ArrD> inputs, double eps,
                                  double tol) {
  GradCheckReport rep;

  auto eval = [&](const std::vector<ArrD>& xs, bool with_grad,
                  std::vector<ArrD>* grads) -> double {
    TapeD t;
    std::vector<int> ids;
    ids.reserve(xs.size());
    for (const ArrD& x : xs) ids.push_back(t.leaf(x, with_grad));
    const int loss = f(t, ids);
    const double val = t.value(loss)[0];
    if (with_grad && grads) {
      t.backward(loss);
      grads->clear();
      for (size_t i = 0; i < ids.size(); ++i) {
        grads->push_back(t.has_grad(ids[static_cast<size_t>(i)])
                             ? t.grad(ids[static_cast<size_t>(i)])
                             : ArrD::zeros(xs[i].shape));
      }
    }
    return val;
  };

  std::vector<ArrD> analytic;
  const double f0 = eval(inputs, true, &analytic);
  if (!std::isfinite(f0)) {
    rep.probe_failure = true;
    rep.worst = "base evaluation non-finite";
    return rep;
  }

  for (size_t vi = 0; vi < inputs.size(); ++vi) {
    for (int64_t e = 0; e < inputs[vi].n(); ++e) {
      const double orig = inputs[vi][e];
      inputs[vi][e] = orig + eps;
      const double fp = eval(inputs, false, nullptr);
      inputs[vi][e] = orig - eps;
      const double fm = eval(inputs, false, nullptr);
      inputs[vi][e] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        rep.probe_failure = true;
        rep.worst = "non-finite probe at input " + std::to_string(vi) + " elem " +
                    std::to_string(e);
        return rep;
      }
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = analytic[vi][e];
      const double denom = std::max(std::abs(an), std::abs(fd));
      const double err = denom < 1e-9 ? 0.0 : std::abs(an - fd) / denom;
      ++rep.n_checked;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst = "input " + std::to_string(vi) + " elem " + std::to_string(e) + ": ad=" +
                    std::to_string(an) + " fd=" + std::to_string(fd);
      }
    }
  }
  rep.ok = rep.max_rel_err < tol;
  return rep;
}

}  // namespace tjepa
