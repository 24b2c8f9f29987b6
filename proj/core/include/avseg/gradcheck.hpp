#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "avseg/nn.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

struct TensorCheck {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t elements = 0;
};

struct GradCheckReport {
  std::string module;
  double h = 1e-5;
  double threshold = 1e-4;
  bool pass = false;
  std::vector<TensorCheck> tensors;

  const TensorCheck* worst() const {
    const TensorCheck* w = nullptr;
    for (const auto& t : tensors)
      if (!w || t.max_rel_err > w->max_rel_err) w = &t;
    return w;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "gradcheck " << module << " (h=" << h << ", threshold=" << threshold << ")\n";
    for (const auto& t : tensors)
      os << "  " << (t.max_rel_err < threshold ? "ok  " : "FAIL") << "  " << t.name
         << "  max_rel_err=" << t.max_rel_err << "  max_abs_err=" << t.max_abs_err << "  ("
         << t.elements << " elements)\n";
    os << (pass ? "PASS" : "FAIL");
    if (!pass && worst()) os << "  worst tensor: " << worst()->name;
    os << "\n";
    return os.str();
  }
};

// Central-difference verification of reverse-mode gradients, 64-bit only.
// `forward_loss` must rebuild the computation from the current parameter
// values on every call and return the scalar loss; `analytic` must zero the
// gradients, run one forward+backward, and leave d(loss)/d(param) in each
// Param::grad.
inline GradCheckReport check_gradients(
    const std::string& module,
    const std::vector<std::pair<std::string, Param<double>*>>& params,
    const std::function<double()>& forward_loss, const std::function<void()>& analytic,
    double h = 1e-5, double threshold = 1e-4) {
  GradCheckReport report;
  report.module = module;
  report.h = h;
  report.threshold = threshold;

  analytic();
  std::vector<Tensor<double>> saved;
  saved.reserve(params.size());
  for (const auto& [name, p] : params) saved.push_back(p->grad);

  report.pass = true;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].second->value;
    const auto& agrad = saved[pi];
    TensorCheck tc;
    tc.name = params[pi].first;
    tc.elements = value.numel();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double fp = forward_loss();
      value[i] = orig - h;
      const double fm = forward_loss();
      value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double abs_err = std::abs(agrad[i] - numeric);
      // Elements are judged relative to max(|analytic|, |numeric|, 1e-3):
      // central differences carry O(h^2 f''') truncation noise (~1e-8 here),
      // so structurally-zero gradients are held to an absolute 1e-7 instead
      // of an ill-defined ratio.
      const double denom = std::max({std::abs(agrad[i]), std::abs(numeric), 1e-3});
      tc.max_abs_err = std::max(tc.max_abs_err, abs_err);
      tc.max_rel_err = std::max(tc.max_rel_err, abs_err / denom);
    }
    if (tc.max_rel_err >= threshold) report.pass = false;
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

// Convenience: collects (name, Param*) pairs via a module's visit().
template <typename Visitable>
std::vector<std::pair<std::string, Param<double>*>> collect_params(const std::string& prefix,
                                                                   Visitable& module) {
  std::vector<std::pair<std::string, Param<double>*>> out;
  module.visit(prefix, [&](const std::string& name, Param<double>& p) {
    out.emplace_back(name, &p);
  });
  return out;
}

template <typename T, typename Visitable>
void zero_grads(Visitable& module) {
  module.visit("", [](const std::string&, Param<T>& p) { p.grad.set_zero(); });
}

}  // namespace avseg
