#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvr/core/rng.hpp"
#include "mvr/core/tape.hpp"

namespace mvr {

struct GradCheckOptions {
  double step = 1e-5;
  // <0 checks every element; otherwise a deterministic sample per tensor.
  int max_elems_per_tensor = -1;
  uint64_t seed = 0x9c0ffee;
  double abs_floor = 1e-6;
  // Test hook: lets a harness self-test corrupt the analytic gradient.
  std::function<double(size_t param, size_t elem, double analytic)> analytic_hook;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t checked = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central finite differences against tape gradients, f64 only. `build` must
// construct the computation from scratch on the given tape (registering the
// same parameter tensors as leaves) and return the scalar output id.
template <class BuildFn>
GradCheckResult grad_check(BuildFn&& build, const std::vector<Tensor<double>*>& params,
                           GradCheckOptions opt = {}) {
  for (auto* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  double f0;
  {
    Tape<double> tape;
    const int out = build(tape);
    f0 = tape.val(out).data[0];
    if (!std::isfinite(f0)) throw std::runtime_error("grad_check: non-finite forward value");
    tape.backward(out);
  }
  auto eval = [&]() {
    Tape<double> tape;
    const int out = build(tape);
    const double f = tape.val(out).data[0];
    if (!std::isfinite(f)) throw std::runtime_error("grad_check: non-finite forward value");
    return f;
  };

  GradCheckResult res;
  Rng rng(opt.seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>* p = params[pi];
    const size_t n = p->numel();
    std::vector<size_t> elems;
    if (opt.max_elems_per_tensor < 0 || n <= static_cast<size_t>(opt.max_elems_per_tensor)) {
      elems.resize(n);
      for (size_t i = 0; i < n; ++i) elems[i] = i;
    } else {
      for (int i = 0; i < opt.max_elems_per_tensor; ++i) elems.push_back(rng.below(n));
    }
    for (size_t e : elems) {
      const double saved = p->data[e];
      p->data[e] = saved + opt.step;
      const double fp = eval();
      p->data[e] = saved - opt.step;
      const double fm = eval();
      p->data[e] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      double analytic = p->grad.empty() ? 0.0 : p->grad[e];
      if (opt.analytic_hook) analytic = opt.analytic_hook(pi, e, analytic);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.abs_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace mvr
