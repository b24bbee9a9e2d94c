#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "rkm/reductions.hpp"

using namespace rkm;

TEST_SUITE("reductions") {
  TEST_CASE("every pairwise identity holds across seeds and windows") {
    for (uint64_t seed = 1; seed <= 8; ++seed) {
      for (int n = 1; n <= 3; ++n) {
        CAPTURE(seed);
        CAPTURE(n);
        for (const IdentityReport& r :
             {check_identity_gated_cnn(seed, n), check_identity_cifg(seed, n),
              check_identity_cnn(seed, n)}) {
          CAPTURE(r.name);
          CHECK(r.pass);
          if (r.exact)
            CHECK(r.max_abs_diff == 0.0);
          else
            CHECK(r.max_abs_diff <= r.tolerance);
        }
      }
      const IdentityReport r = check_identity_ran(seed);
      CHECK(r.pass);
      CHECK(r.max_abs_diff <= r.tolerance);
    }
  }

  TEST_CASE("the reports say what was checked and how strictly") {
    const IdentityReport a = check_identity_gated_cnn(1);
    CHECK(a.name == "gated-cnn = output-gated linear kernel");
    CHECK(a.exact);

    const IdentityReport b = check_identity_ran(1);
    CHECK(b.name == "rkm-lstm (saturated output gate) = additive network");
    CHECK_FALSE(b.exact);
    CHECK(b.tolerance == 1e-12);

    const IdentityReport c = check_identity_cifg(1);
    CHECK(c.name == "cifg = rkm-lstm with tied gates");
    CHECK_FALSE(c.exact);
    CHECK(c.tolerance == 1e-12);

    const IdentityReport d = check_identity_cnn(1);
    CHECK(d.name == "linear kernel (zero memory gain) = cnn");
    CHECK(d.exact);

    const IdentityReport e = check_nested_vs_recursive(1);
    CHECK(e.name == "nested = recursive kernel evaluation");
  }

  TEST_CASE("nested and recursive evaluation agree on random models") {
    for (uint64_t seed = 1; seed <= 6; ++seed) {
      const IdentityReport r = check_nested_vs_recursive(seed);
      CAPTURE(seed);
      CHECK(r.pass);
      CHECK(r.max_abs_diff <= r.tolerance);
    }
  }

  TEST_CASE("a feedforward impulse dies after lag zero") {
    const auto rows = impulse_response(CellVariant::kGatedCnn, 0.7, 0.5, 6);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0].measured == 0.7);  // memory gain is forced to zero
    CHECK(rows[0].predicted == 0.7);
    for (size_t lag = 1; lag < rows.size(); ++lag) {
      CHECK(rows[lag].measured == 0.0);
      CHECK(rows[lag].predicted == 0.0);
    }
  }

  TEST_CASE("a recurrent impulse decays geometrically") {
    const double si2 = 0.9, sf2 = 0.3;
    const auto rows =
        impulse_response(CellVariant::kLinearKernelOutGate, si2, sf2, 10);
    REQUIRE(rows.size() == 11);
    for (const ImpulseRow& row : rows) {
      const double want = si2 * std::pow(sf2, row.lag);
      CHECK(row.predicted == doctest::Approx(want).epsilon(1e-12));
      CHECK(std::abs(row.measured - want) < 1e-12);
      CHECK(row.ratio == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("impulse probing refuses learned-gate variants") {
    CHECK_THROWS_AS(impulse_response(CellVariant::kRkmLstm, 0.5, 0.5, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(impulse_response(CellVariant::kLstm, 0.5, 0.5, 4),
                    std::invalid_argument);
  }
}
