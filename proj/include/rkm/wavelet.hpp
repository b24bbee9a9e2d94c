#pragma once

#include <vector>

#include "rkm/ngram.hpp"
#include "rkm/param.hpp"
#include "rkm/tape.hpp"

namespace rkm {

// Morlet-wavelet parameterization of a K-filter, C-channel, n-tap bank:
//   entry (k, c, tau) = alpha[k,c] * cos(omega[k]*t_tau + phi[k,c])
//                                  * exp(-beta[k]*t_tau^2)
// over the fixed centered grid t_tau = tau - (n-1)/2. The bank costs
// 2KC + 2K scalars regardless of n.
class WaveletBank {
 public:
  WaveletBank(int K, int C, int n);

  int K() const { return K_; }
  int C() const { return C_; }
  int taps() const { return n_; }
  double grid(int tau) const { return grid_[tau]; }
  const Vec& grid_vector() const { return grid_; }

  // omega ~ U(0, pi/4), beta ~ U(0, 0.05), alpha ~ U(-0.1, 0.1),
  // phi ~ U(-pi, pi), drawn in (alpha, omega, phi, beta) order.
  void init(Rng& rng);

  // Direct closed-form evaluation of the lag-tau block [K x C].
  Matrix block(int tau) const;
  FilterBank materialize() const;

  // Same block built on the tape so gradients reach all four families.
  // Non-const: backward() accumulates into the parameters used.
  Value block(Tape& t, int tau);

  // Entries with beta < 0 make the envelope grow away from the window
  // center; legal but suspicious.
  int negative_decay_count() const;

  std::vector<Parameter*> params();
  size_t scalar_count() const { return 2 * size_t(K_) * C_ + 2 * size_t(K_); }

  Parameter alpha;  // [K x C]
  Parameter omega;  // [K]
  Parameter phi;    // [K x C]
  Parameter beta;   // [K]

 private:
  int K_, C_, n_;
  Vec grid_;
};

}  // namespace rkm
