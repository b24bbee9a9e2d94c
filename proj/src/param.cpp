#include "rkm/param.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rkm {

void ParamSet::add(Parameter& p) {
  if (p.name.empty()) throw std::invalid_argument("ParamSet: unnamed parameter");
  for (const Parameter* q : items_)
    if (q->name == p.name)
      throw std::invalid_argument("ParamSet: duplicate parameter name '" + p.name + "'");
  items_.push_back(&p);
}

void ParamSet::add_all(std::span<Parameter* const> ps) {
  for (Parameter* p : ps) add(*p);
}

Parameter* ParamSet::find(const std::string& name) const {
  for (Parameter* p : items_)
    if (p->name == name) return p;
  return nullptr;
}

void ParamSet::zero_grads() {
  for (Parameter* p : items_) p->zero_grad();
}

size_t ParamSet::scalar_count(bool trainable_only) const {
  size_t n = 0;
  for (const Parameter* p : items_)
    if (!trainable_only || p->trainable) n += p->size();
  return n;
}

double ParamSet::grad_global_norm() const {
  double acc = 0.0;
  for (const Parameter* p : items_)
    for (double g : p->grad) acc += g * g;
  return std::sqrt(acc);
}

std::vector<Vec> finite_diff_grad(const std::function<double()>& f,
                                  const ParamSet& params, double eps) {
  std::vector<Vec> out;
  out.reserve(params.items().size());
  for (Parameter* p : params.items()) {
    Vec g(p->size(), 0.0);
    for (size_t k = 0; k < p->size(); ++k) {
      const double saved = p->value[k];
      p->value[k] = saved + eps;
      const double fp = f();
      p->value[k] = saved - eps;
      const double fm = f();
      p->value[k] = saved;
      g[k] = (fp - fm) / (2.0 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

GradCheckResult compare_grads(const std::function<double()>& f,
                              const ParamSet& params, double eps) {
  const std::vector<Vec> fd = finite_diff_grad(f, params, eps);
  GradCheckResult res;
  for (size_t pi = 0; pi < params.items().size(); ++pi) {
    const Parameter* p = params.items()[pi];
    for (size_t k = 0; k < p->size(); ++k) {
      const double e = rel_err(p->grad[k], fd[pi][k]);
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst_param = p->name;
        res.worst_index = static_cast<int>(k);
      }
    }
  }
  return res;
}

}  // namespace rkm
