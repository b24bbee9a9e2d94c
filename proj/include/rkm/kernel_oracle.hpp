#pragma once

#include <vector>

#include "rkm/ngram.hpp"

namespace rkm {

// Pointwise maps for the memory recursion   c_t = g_in(ctilde_t) + q(c_{t-1}).
//   kIdentity:     g_in = id,       q = id,        emission h' = c
//   kTanh:         g_in = id,       q = tanh,      emission h' = tanh(c)
//   kScaledLinear: g_in = si2 * u,  q = sf2 * u,   emission h' = c
enum class KernelKind { kIdentity, kScaledLinear, kTanh };

struct PointwiseKernel {
  KernelKind kind = KernelKind::kIdentity;
  double sigma_i_sq = 1.0;  // content gain, scaled-linear only
  double sigma_f_sq = 1.0;  // memory gain, scaled-linear only

  double q(double u) const;     // the map applied to carried state
  double g_in(double u) const;  // the map applied to fresh content
  double emit(double u) const;  // state -> hidden output
};

// State recursion over the whole sequence, emitting h'_t for every t.
// ctilde_t = contract(bank, window at t), plus feedback * h'_{t-1} when a
// feedback matrix is given. `tail` seeds the recursion additively at t=0
// (the q-image of a pre-sequence state); default zero.
std::vector<Vec> recursive_eval(const PointwiseKernel& k, const FilterBank& bank,
                                const std::vector<Vec>& seq,
                                const Matrix* feedback = nullptr,
                                const Vec* tail = nullptr, int dilation = 1);

// Literal expansion of the nested form at position t with depth N
// (N <= t+1), evaluated innermost term first. For the scaled-linear kernel
// this is the independent closed form
//   sum_{k=0}^{N-1} si2 * sf2^k * ctilde_{t-k}  +  sf2^(N-1) * tail,
// with the powers computed directly rather than by recursion.
Vec nested_eval(const PointwiseKernel& k, const FilterBank& bank,
                const std::vector<Vec>& seq, int t, int N,
                const Vec* tail = nullptr, int dilation = 1);

}  // namespace rkm
