#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "rkm/cell.hpp"
#include "rkm/kernel_oracle.hpp"

using namespace rkm;

namespace {

FilterBank random_bank(Rng& rng, int j, int m, int n) {
  FilterBank bank;
  for (int k = 0; k < n; ++k) {
    Matrix block(j, m);
    fill_uniform(rng, block.v, -1.0, 1.0);
    bank.blocks.push_back(std::move(block));
  }
  return bank;
}

std::vector<Vec> random_sequence(Rng& rng, int T, int m) {
  std::vector<Vec> seq(T, Vec(m));
  for (Vec& x : seq) fill_uniform(rng, x, -1.0, 1.0);
  return seq;
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("depth-1 expansion is the bare content term") {
    Rng rng(3);
    const FilterBank bank = random_bank(rng, 2, 3, 2);
    const auto seq = random_sequence(rng, 5, 3);
    PointwiseKernel k;  // identity
    for (int t = 0; t < 5; ++t) {
      const Vec want = contract(bank, window(seq, t, bank.n()));
      const Vec got = nested_eval(k, bank, seq, t, 1);
      for (int i = 0; i < 2; ++i) CHECK(got[i] == want[i]);
    }
  }

  TEST_CASE("identity kernel telescopes into a running sum") {
    Rng rng(11);
    const int j = 3, T = 7;
    const FilterBank bank = random_bank(rng, j, 2, 1);
    const auto seq = random_sequence(rng, T, 2);
    PointwiseKernel k;

    const auto out = recursive_eval(k, bank, seq);
    Vec running(j, 0.0);
    for (int t = 0; t < T; ++t) {
      const Vec ct = contract(bank, window(seq, t, 1));
      for (int i = 0; i < j; ++i) {
        running[i] += ct[i];
        CHECK(out[t][i] == doctest::Approx(running[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("scaled-linear kernel is a geometric series over the content") {
    Rng rng(19);
    const int j = 2, T = 9;
    const FilterBank bank = random_bank(rng, j, 2, 2);
    const auto seq = random_sequence(rng, T, 2);
    PointwiseKernel k;
    k.kind = KernelKind::kScaledLinear;
    k.sigma_i_sq = 0.5;
    k.sigma_f_sq = 0.25;

    const auto out = recursive_eval(k, bank, seq);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < j; ++i) {
        double want = 0.0;
        for (int lag = 0; lag <= t; ++lag)
          want += k.sigma_i_sq * std::pow(k.sigma_f_sq, lag) *
                  contract(bank, window(seq, t - lag, 2))[i];
        CHECK(out[t][i] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("a tail seeds the recursion like a pre-sequence state") {
    Rng rng(23);
    const int j = 2, T = 6;
    const FilterBank bank = random_bank(rng, j, 1, 1);
    const auto seq = random_sequence(rng, T, 1);
    const Vec tail = {0.4, -1.1};

    PointwiseKernel k;
    k.kind = KernelKind::kTanh;
    const auto with_tail = recursive_eval(k, bank, seq, nullptr, &tail);

    // First step: c_0 = ctilde_0 + tail, h'_0 = tanh(c_0).
    const Vec c0 = contract(bank, window(seq, 0, 1));
    for (int i = 0; i < j; ++i)
      CHECK(with_tail[0][i] ==
            doctest::Approx(std::tanh(c0[i] + tail[i])).epsilon(1e-14));

    // The nested form threaded with the same tail reproduces the last step.
    const Vec nested = nested_eval(k, bank, seq, T - 1, T, &tail);
    for (int i = 0; i < j; ++i)
      CHECK(with_tail[T - 1][i] == doctest::Approx(nested[i]).epsilon(1e-12));
  }

  TEST_CASE("feedback folds the previous emission into the content") {
    Rng rng(31);
    const int j = 2, T = 4;
    const FilterBank bank = random_bank(rng, j, 2, 1);
    const auto seq = random_sequence(rng, T, 2);
    Matrix fb(j, j);
    fill_uniform(rng, fb.v, -0.5, 0.5);

    PointwiseKernel k;
    k.kind = KernelKind::kTanh;
    const auto got = recursive_eval(k, bank, seq, &fb);

    // Replicate the update by hand: ctilde += F h'_{t-1}, c = ctilde + q(c),
    // h' = tanh(c).
    Vec c(j, 0.0), h(j, 0.0);
    for (int t = 0; t < T; ++t) {
      Vec ct = contract(bank, window(seq, t, 1));
      const Vec push = matvec(fb, h);
      for (int i = 0; i < j; ++i)
        c[i] = ct[i] + push[i] + (t == 0 ? 0.0 : std::tanh(c[i]));
      for (int i = 0; i < j; ++i) {
        h[i] = std::tanh(c[i]);
        CHECK(got[t][i] == doctest::Approx(h[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("additive memory forgets the order of its inputs") {
    Rng rng(37);
    const int j = 3, T = 6;
    const FilterBank bank = random_bank(rng, j, 2, 1);
    auto seq = random_sequence(rng, T, 2);
    PointwiseKernel k;  // identity: the final state is a plain sum

    const Vec last = recursive_eval(k, bank, seq).back();
    std::reverse(seq.begin(), seq.end());
    const Vec reversed_last = recursive_eval(k, bank, seq).back();
    for (int i = 0; i < j; ++i)
      CHECK(last[i] == doctest::Approx(reversed_last[i]).epsilon(1e-12));
  }

  TEST_CASE("the oracle matches the tape-built static-gain cell") {
    // Same weights into both implementations: the cell runs on the
    // gradient tape, the oracle on plain loops. Agreement certifies the
    // recursive memory form against an implementation that shares no code
    // with it.
    Rng rng(41);
    const int m = 2, d = 3, n = 2, T = 8;
    CellConfig cfg;
    cfg.variant = CellVariant::kLinearKernel;
    cfg.m = m;
    cfg.d = d;
    cfg.n = n;
    cfg.sigma_i_sq = 0.6;
    cfg.sigma_f_sq = 0.3;
    Cell cell(cfg);
    cell.init_params(rng());
    if (cell.content().h)
      std::fill(cell.content().h->value.begin(), cell.content().h->value.end(),
                0.0);
    if (cell.content().b)
      std::fill(cell.content().b->value.begin(), cell.content().b->value.end(),
                0.0);

    FilterBank bank;
    for (int k = 0; k < n; ++k) bank.blocks.push_back(cell.content().x[k].as_matrix());

    const auto seq = random_sequence(rng, T, m);
    std::vector<double> flat;
    for (const Vec& x : seq) flat.insert(flat.end(), x.begin(), x.end());

    PointwiseKernel k;
    k.kind = KernelKind::kScaledLinear;
    k.sigma_i_sq = cfg.sigma_i_sq;
    k.sigma_f_sq = cfg.sigma_f_sq;
    const auto oracle = recursive_eval(k, bank, seq);

    Tape t;
    const auto hs = cell.run_sequence(t, flat, T);
    for (int step = 0; step < T; ++step)
      for (int i = 0; i < d; ++i)
        CHECK(t.data(hs[step])[i] ==
              doctest::Approx(std::tanh(oracle[step][i])).epsilon(1e-12));
  }

  TEST_CASE("depth bounds are enforced") {
    Rng rng(43);
    const FilterBank bank = random_bank(rng, 1, 1, 1);
    const auto seq = random_sequence(rng, 4, 1);
    PointwiseKernel k;
    CHECK_THROWS_AS(nested_eval(k, bank, seq, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(nested_eval(k, bank, seq, 2, 4), std::invalid_argument);
    CHECK_THROWS_AS(nested_eval(k, bank, seq, 4, 1), std::out_of_range);
    CHECK_THROWS_AS(recursive_eval(k, bank, {}), std::invalid_argument);
  }
}
