#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rkm/common.hpp"

namespace rkm {

// Named learnable array. `value` and `grad` always have identical shape.
struct Parameter {
  std::string name;
  int rows = 0, cols = 1;
  Vec value;
  Vec grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, int r, int c = 1, bool train = true)
      : name(std::move(n)),
        rows(r),
        cols(c),
        value(static_cast<size_t>(r) * c, 0.0),
        grad(static_cast<size_t>(r) * c, 0.0),
        trainable(train) {}

  size_t size() const { return value.size(); }
  bool allocated() const { return !value.empty(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  Matrix as_matrix() const {
    Matrix m(rows, cols);
    m.v = value;
    return m;
  }
};

// Ordered collection of parameter references with unique names.
class ParamSet {
 public:
  void add(Parameter& p);
  void add_all(std::span<Parameter* const> ps);
  std::vector<Parameter*>& items() { return items_; }
  const std::vector<Parameter*>& items() const { return items_; }
  Parameter* find(const std::string& name) const;
  void zero_grads();
  size_t scalar_count(bool trainable_only = false) const;
  double grad_global_norm() const;

 private:
  std::vector<Parameter*> items_;
};

// Central finite differences (f(x+eps) - f(x-eps)) / (2 eps), evaluated
// coordinate-by-coordinate over every parameter in the set. `f` must
// read the parameters' current values.
std::vector<Vec> finite_diff_grad(const std::function<double()>& f,
                                  const ParamSet& params, double eps = 1e-5);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
};

// Compares Parameter::grad (already accumulated by a backward pass)
// against finite differences of `f`.
GradCheckResult compare_grads(const std::function<double()>& f,
                              const ParamSet& params, double eps = 1e-5);

}  // namespace rkm
