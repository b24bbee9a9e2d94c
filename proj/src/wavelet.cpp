#include "rkm/wavelet.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rkm {

WaveletBank::WaveletBank(int K, int C, int n)
    : alpha("wavelet.alpha", K, C),
      omega("wavelet.omega", K),
      phi("wavelet.phi", K, C),
      beta("wavelet.beta", K),
      K_(K),
      C_(C),
      n_(n),
      grid_(n) {
  if (K < 1 || C < 1 || n < 1)
    throw std::invalid_argument("WaveletBank: K, C, n must be >= 1");
  for (int tau = 0; tau < n; ++tau)
    grid_[tau] = tau - (n - 1) / 2.0;  // centered, unit spacing
}

void WaveletBank::init(Rng& rng) {
  constexpr double pi = std::numbers::pi;
  fill_uniform(rng, alpha.value, -0.1, 0.1);
  fill_uniform(rng, omega.value, 0.0, pi / 4.0);
  fill_uniform(rng, phi.value, -pi, pi);
  fill_uniform(rng, beta.value, 0.0, 0.05);
}

Matrix WaveletBank::block(int tau) const {
  if (tau < 0 || tau >= n_)
    throw std::out_of_range("WaveletBank::block: tau=" + std::to_string(tau));
  const double t = grid_[tau];
  Matrix w(K_, C_);
  for (int k = 0; k < K_; ++k) {
    const double env = std::exp(-beta.value[k] * t * t);
    const double wt = omega.value[k] * t;
    for (int c = 0; c < C_; ++c)
      w.at(k, c) = alpha.value[static_cast<size_t>(k) * C_ + c] *
                   (std::cos(wt + phi.value[static_cast<size_t>(k) * C_ + c]) * env);
  }
  return w;
}

FilterBank WaveletBank::materialize() const {
  FilterBank bank;
  bank.blocks.reserve(n_);
  for (int tau = 0; tau < n_; ++tau) bank.blocks.push_back(block(tau));
  return bank;
}

Value WaveletBank::block(Tape& t, int tau) {
  if (tau < 0 || tau >= n_)
    throw std::out_of_range("WaveletBank::block: tau=" + std::to_string(tau));
  const double tg = grid_[tau];
  // cos(omega*t + phi) with the frequency column broadcast across channels
  Value wt = t.repeat_each(t.axpb(t.use(omega), tg), C_);
  Value carrier = t.cos_(t.add(wt, t.use(phi)));
  // exp(-beta*t^2), likewise broadcast
  Value env = t.repeat_each(t.exp_(t.axpb(t.use(beta), -tg * tg)), C_);
  return t.hadamard(t.use(alpha), t.hadamard(carrier, env));
}

int WaveletBank::negative_decay_count() const {
  int c = 0;
  for (double b : beta.value)
    if (b < 0.0) ++c;
  return c;
}

std::vector<Parameter*> WaveletBank::params() {
  return {&alpha, &omega, &phi, &beta};
}

}  // namespace rkm
