#pragma once

#include <string>
#include <vector>

#include "rkm/cell.hpp"

namespace rkm {

// One cross-variant equivalence check on a random model and sequence.
// `exact` means zero tolerance was demanded (shared arithmetic path);
// otherwise `tolerance` bounds the permitted max abs difference.
struct IdentityReport {
  std::string name;
  double max_abs_diff = 0.0;
  bool exact = false;
  double tolerance = 0.0;
  bool pass = false;
};

// Gated CNN vs the output-gated linear kernel at unit input gain, zero
// memory gain, zeroed feedback, shared content and gate filters: exact.
IdentityReport check_identity_gated_cnn(uint64_t seed, int n = 1);

// RKM-LSTM with the output gate saturated to exactly 1 and content
// feedback removed vs a separately coded recurrent additive network.
IdentityReport check_identity_ran(uint64_t seed);

// Coupled input-forget gating vs an RKM-LSTM whose input-gate parameters
// are the negated forget-gate parameters.
IdentityReport check_identity_cifg(uint64_t seed, int n = 1);

// Linear kernel at zero memory gain with zeroed feedback vs the CNN: exact.
IdentityReport check_identity_cnn(uint64_t seed, int n = 1);

// Nested vs recursive kernel evaluation at full depth for one random
// bank/sequence, all three pointwise kernels.
IdentityReport check_nested_vs_recursive(uint64_t seed);

// Per-lag impulse response of a static-gain cell's memory against the
// closed-form geometric prediction.
struct ImpulseRow {
  int lag = 0;
  double measured = 0.0;
  double predicted = 0.0;
  double ratio = 1.0;
};
std::vector<ImpulseRow> impulse_response(CellVariant v, double sigma_i_sq,
                                         double sigma_f_sq, int max_lag);

}  // namespace rkm
