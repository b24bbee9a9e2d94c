#include "rkm/kernel_oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rkm {

double PointwiseKernel::q(double u) const {
  switch (kind) {
    case KernelKind::kIdentity: return u;
    case KernelKind::kScaledLinear: return sigma_f_sq * u;
    case KernelKind::kTanh: return std::tanh(u);
  }
  return u;
}

double PointwiseKernel::g_in(double u) const {
  return kind == KernelKind::kScaledLinear ? sigma_i_sq * u : u;
}

double PointwiseKernel::emit(double u) const {
  return kind == KernelKind::kTanh ? std::tanh(u) : u;
}

namespace {

std::vector<Vec> content_sequence(const FilterBank& bank,
                                  const std::vector<Vec>& seq, int dilation) {
  std::vector<Vec> ct;
  ct.reserve(seq.size());
  for (int t = 0; t < static_cast<int>(seq.size()); ++t)
    ct.push_back(contract(bank, window(seq, t, bank.n(), dilation)));
  return ct;
}

}  // namespace

std::vector<Vec> recursive_eval(const PointwiseKernel& k, const FilterBank& bank,
                                const std::vector<Vec>& seq,
                                const Matrix* feedback, const Vec* tail,
                                int dilation) {
  if (seq.empty()) throw std::invalid_argument("recursive_eval: empty sequence");
  const int j = bank.j();
  Vec c(j, 0.0), h(j, 0.0);
  std::vector<Vec> out;
  out.reserve(seq.size());
  for (int t = 0; t < static_cast<int>(seq.size()); ++t) {
    Vec ctilde = contract(bank, window(seq, t, bank.n(), dilation));
    if (feedback) {
      const Vec fb = matvec(*feedback, h);
      for (int i = 0; i < j; ++i) ctilde[i] += fb[i];
    }
    for (int i = 0; i < j; ++i) {
      const double carried = (t == 0) ? (tail ? (*tail)[i] : 0.0) : k.q(c[i]);
      c[i] = k.g_in(ctilde[i]) + carried;
    }
    for (int i = 0; i < j; ++i) h[i] = k.emit(c[i]);
    out.push_back(h);
  }
  return out;
}

Vec nested_eval(const PointwiseKernel& k, const FilterBank& bank,
                const std::vector<Vec>& seq, int t, int N, const Vec* tail,
                int dilation) {
  if (t < 0 || t >= static_cast<int>(seq.size()))
    throw std::out_of_range("nested_eval: t=" + std::to_string(t));
  if (N < 1 || N > t + 1)
    throw std::invalid_argument("nested_eval: depth N=" + std::to_string(N) +
                                " must lie in [1, t+1]");
  const int j = bank.j();
  const std::vector<Vec> ctilde = content_sequence(bank, seq, dilation);

  Vec acc(j, 0.0);
  if (k.kind == KernelKind::kScaledLinear) {
    // Direct closed form; powers via pow, not by carrying state.
    for (int kk = 0; kk < N; ++kk) {
      const double coef = k.sigma_i_sq * std::pow(k.sigma_f_sq, kk);
      for (int i = 0; i < j; ++i) acc[i] += coef * ctilde[t - kk][i];
    }
    if (tail) {
      const double coef = std::pow(k.sigma_f_sq, N - 1);
      for (int i = 0; i < j; ++i) acc[i] += coef * (*tail)[i];
    }
  } else {
    // Innermost bracket first: c_{t-N+1} = ctilde_{t-N+1} + tail, then
    // ascend with c_s = ctilde_s + q(c_{s-1}).
    for (int i = 0; i < j; ++i)
      acc[i] = ctilde[t - N + 1][i] + (tail ? (*tail)[i] : 0.0);
    for (int s = t - N + 2; s <= t; ++s)
      for (int i = 0; i < j; ++i) acc[i] = ctilde[s][i] + k.q(acc[i]);
  }
  for (int i = 0; i < j; ++i) acc[i] = k.emit(acc[i]);
  return acc;
}

}  // namespace rkm
