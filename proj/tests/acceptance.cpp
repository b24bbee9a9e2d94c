// Acceptance gate for the library: one release-blocking property per
// criterion, one PASS/FAIL line each. Every check recomputes its expected
// values through an independent route — hand-entered constants, finite
// differences, a literal nested expansion, a counting baseline — rather
// than trusting the code under test to certify itself.
//
// Usage: rkm_acceptance [criterion|all] [corpus-path]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rkm/cell.hpp"
#include "rkm/checkpoint.hpp"
#include "rkm/data.hpp"
#include "rkm/heads.hpp"
#include "rkm/kernel_oracle.hpp"
#include "rkm/reductions.hpp"
#include "rkm/train.hpp"

namespace {

using namespace rkm;

struct Outcome {
  bool ok = false;
  std::string detail;
};

template <typename... Args>
std::string strf(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// Closed-form weight counts at m = d = 300 against hand-entered values
// (weights only — biases and normalization excluded), then the same values
// against the scalars a real cell actually allocates.
Outcome crit_param_count() {
  struct Row {
    CellVariant v;
    size_t n1, n3;
  };
  const Row rows[] = {
      {CellVariant::kLstm, 720'000, 1'440'000},
      {CellVariant::kRkmLstm, 720'000, 1'440'000},
      {CellVariant::kRkmCifg, 540'000, 1'080'000},
      {CellVariant::kLinearKernelOutGate, 360'000, 720'000},
      {CellVariant::kLinearKernel, 180'000, 360'000},
      {CellVariant::kGatedCnn, 180'000, 540'000},
      {CellVariant::kCnn, 90'000, 270'000},
  };
  int checked = 0;
  for (const Row& r : rows) {
    for (int n : {1, 3}) {
      const size_t want = n == 1 ? r.n1 : r.n3;
      const size_t got = param_count(r.v, 300, 300, n);
      if (got != want)
        return {false, strf("param_count(%s, 300, 300, %d) = %zu, want %zu",
                            variant_name(r.v), n, got, want)};
      CellConfig cfg;
      cfg.variant = r.v;
      cfg.m = 300;
      cfg.d = 300;
      cfg.n = n;
      Cell cell(cfg);
      if (cell.weight_scalar_count() != want)
        return {false,
                strf("allocated %s n=%d cell holds %zu weight scalars, want %zu",
                     variant_name(r.v), n, cell.weight_scalar_count(), want)};
      ++checked;
    }
  }
  return {true, strf("%d/14 closed-form counts match and allocation agrees",
                     checked)};
}

// Reverse-mode gradients of a random-sequence loss against central finite
// differences: every variant plain and wavelet-parameterized (which puts
// the amplitude/frequency/phase/decay parameters under test), plus layer
// normalization and learned static gains on top.
Outcome crit_grad_suite() {
  double worst = 0.0;
  std::string where = "-";
  int configs = 0;
  auto run = [&](CellConfig cfg, uint64_t seed) {
    cfg.m = 3;
    cfg.d = 4;
    cfg.n = 2;
    const GradCheckResult r = grad_check_cell(cfg, /*seq_len=*/6, seed);
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      where = strf("%s, %s[%d]", variant_name(cfg.variant),
                   r.worst_param.c_str(), r.worst_index);
    }
    ++configs;
  };

  uint64_t seed = 101;
  for (CellVariant v : kAllVariants) {
    CellConfig plain;
    plain.variant = v;
    run(plain, seed++);
    CellConfig wave;
    wave.variant = v;
    wave.use_wavelet = true;
    run(wave, seed++);
  }
  CellConfig full;
  full.variant = CellVariant::kRkmLstm;
  full.use_layer_norm = true;
  full.use_wavelet = true;
  full.learn_sigmas = true;
  run(full, seed++);
  CellConfig gains;
  gains.variant = CellVariant::kLinearKernelOutGate;
  gains.learn_sigmas = true;
  run(gains, seed++);

  return {worst < 1e-5,
          strf("max rel err %.3e (%s) over %d configurations, bound 1e-5",
               worst, where.c_str(), configs)};
}

// The state recursion against the literal nested expansion at full depth,
// for all three pointwise kernels over random shapes and sequences.
Outcome crit_kernel_recursion() {
  double worst = 0.0;
  int positions = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(0xACCE57ull * 2654435761ull + seed);
    const int j = 1 + static_cast<int>(rng() % 4);
    const int m = 1 + static_cast<int>(rng() % 3);
    const int n = 1 + static_cast<int>(rng() % 2);
    const int T = 2 + static_cast<int>(rng() % 11);

    FilterBank bank;
    for (int k = 0; k < n; ++k) {
      Matrix block(j, m);
      fill_uniform(rng, block.v, -1.0, 1.0);
      bank.blocks.push_back(std::move(block));
    }
    std::vector<Vec> seq(T, Vec(m));
    for (Vec& x : seq) fill_uniform(rng, x, -1.0, 1.0);

    for (KernelKind kind : {KernelKind::kIdentity, KernelKind::kScaledLinear,
                            KernelKind::kTanh}) {
      PointwiseKernel kernel;
      kernel.kind = kind;
      if (kind == KernelKind::kScaledLinear) {
        kernel.sigma_i_sq = 0.7;
        kernel.sigma_f_sq = 0.6;
      }
      const std::vector<Vec> rec = recursive_eval(kernel, bank, seq);
      for (int t = 0; t < T; ++t) {
        const Vec nest = nested_eval(kernel, bank, seq, t, t + 1);
        for (int i = 0; i < j; ++i)
          worst = std::max(worst, std::abs(rec[t][i] - nest[i]));
        ++positions;
      }
    }
  }
  return {worst < 1e-10,
          strf("max abs diff %.3e over %d positions (20 seeds), bound 1e-10",
               worst, positions)};
}

// The four cross-variant identities. Two run on a shared arithmetic path
// and must agree bit for bit; the other two compare against independently
// coded references within 1e-12.
Outcome crit_reduction_identities() {
  double worst_bounded = 0.0;
  int checked = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const int n = 1 + static_cast<int>(seed % 3);
    const IdentityReport reports[] = {
        check_identity_gated_cnn(seed, n),
        check_identity_ran(seed),
        check_identity_cifg(seed, n),
        check_identity_cnn(seed, n),
    };
    for (const IdentityReport& r : reports) {
      if (!r.pass)
        return {false, strf("%s: max abs diff %.3e at seed %llu", r.name.c_str(),
                            r.max_abs_diff,
                            static_cast<unsigned long long>(seed))};
      if (r.exact && r.max_abs_diff != 0.0)
        return {false, strf("%s claims exactness but differs by %.3e",
                            r.name.c_str(), r.max_abs_diff)};
      if (!r.exact) worst_bounded = std::max(worst_bounded, r.max_abs_diff);
      ++checked;
    }
  }
  return {true,
          strf("%d checks over 5 seeds: bitwise pairs exact, bounded pairs "
               "within %.3e of 1e-12",
               checked, worst_bounded)};
}

// A unit of content injected at one step must survive N further steps with
// weight exactly si2 * sf2^N; the prediction is recomputed here from pow.
Outcome crit_fading_memory() {
  const double si2 = 0.5, sf2 = 0.5;
  const std::vector<ImpulseRow> rows =
      impulse_response(CellVariant::kLinearKernel, si2, sf2, /*max_lag=*/20);
  double worst = 0.0;
  for (const ImpulseRow& r : rows) {
    const double want = si2 * std::pow(sf2, r.lag);
    worst = std::max(worst, std::abs(r.measured - want));
  }
  return {worst < 1e-10,
          strf("max abs error %.3e against si2*sf2^N for N = 0..20, bound 1e-10",
               worst)};
}

// A task whose label is only readable by carrying state: classify the token
// shown a fixed distance before an end-of-sequence marker. A gated
// recurrent cell must solve it; a windowed feedforward cell, whose pooled
// features carry no position information, must stay near chance (25%).
Outcome crit_delayed_recall() {
  const SequenceDataset all =
      gen_delayed_recall(/*lag=*/10, /*classes=*/4, /*length=*/30,
                         /*count=*/5000, /*seed=*/20260816);
  const auto [train, test] = split_dataset(all, 0.8);

  auto build = [&](CellVariant v, int n) {
    Classifier::Config cc;
    cc.cell.variant = v;
    cc.cell.m = 16;
    cc.cell.d = 64;
    cc.cell.n = n;
    cc.cell.seed = 1;
    cc.vocab = all.vocab;
    cc.n_classes = all.n_classes;
    auto model = std::make_unique<Classifier>(cc);
    model->init_params(1);
    return model;
  };

  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 32;
  tc.lr = 2e-3;
  tc.seed = 1;

  auto recurrent = build(CellVariant::kRkmLstm, 1);
  TrainConfig tr = tc;
  tr.target_metric = 0.955;  // stop once safely above the bar
  train_classifier(*recurrent, train, test, tr);
  const double acc_memory = accuracy(*recurrent, test);

  auto feedforward = build(CellVariant::kCnn, 3);
  train_classifier(*feedforward, train, test, tc);
  const double acc_window = accuracy(*feedforward, test);

  const bool ok = acc_memory >= 0.95 && acc_window <= 0.40;
  return {ok, strf("recurrent cell %.1f%% (needs >= 95.0%%), windowed "
                   "feedforward %.1f%% (needs <= 40.0%%) on 1000 held-out items",
                   100.0 * acc_memory, 100.0 * acc_window)};
}

// Character-level modeling must beat a context-free baseline by at least
// 20%. The baseline is an add-one-smoothed unigram model fit on the
// training split by raw byte counting right here, sharing no code with the
// model under test.
Outcome crit_char_lm(const std::string& corpus) {
  std::vector<uint8_t> charset;
  const std::vector<int> tokens = load_chars(corpus, charset);
  const int vocab = static_cast<int>(charset.size());
  const size_t cut = static_cast<size_t>(0.9 * double(tokens.size()) + 0.5);
  const std::span<const int> train(tokens.data(), cut);
  const std::span<const int> val(tokens.data() + cut, tokens.size() - cut);

  std::vector<int64_t> counts(vocab, 0);
  for (int id : train) counts[id]++;
  double nll = 0.0;
  for (int id : val)
    nll -= std::log((double(counts[id]) + 1.0) / (double(train.size()) + vocab));
  const double unigram_ppl = std::exp(nll / double(val.size()));
  const double bar = 0.8 * unigram_ppl;

  LanguageModel::Config mc;
  mc.cell.variant = CellVariant::kRkmLstm;
  mc.cell.m = 24;
  mc.cell.d = 64;
  mc.cell.n = 1;
  mc.cell.use_layer_norm = true;  // keeps the carried state scale bounded
  mc.cell.seed = 1;
  mc.vocab = vocab;
  LanguageModel model(mc);
  model.init_params(1);

  TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 4;
  tc.tbptt = 35;
  tc.lr = 2e-3;
  tc.seed = 1;
  tc.target_metric = 0.6 * unigram_ppl;  // stop once well below the bar
  train_lm(model, train, val, tc);
  const double ppl = model.perplexity(val);

  return {ppl <= bar,
          strf("val perplexity %.2f vs unigram oracle %.2f over %d symbols "
               "(needs <= %.2f)",
               ppl, unigram_ppl, vocab, bar)};
}

// Persistence must not perturb one bit: after save -> load, per-item
// probabilities, accuracy, perplexity, and the stored byte table all equal
// the originals under operator==.
Outcome crit_checkpoint_roundtrip(const std::string& corpus) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "rkm_acceptance";
  fs::create_directories(dir);

  // Classifier leg, briefly trained so the weights are past their init.
  const SequenceDataset keyword = gen_keyword(400, /*seed=*/99);
  const auto [train, test] = split_dataset(keyword, 0.75);
  Classifier::Config cc;
  cc.cell.variant = CellVariant::kRkmLstm;
  cc.cell.m = 6;
  cc.cell.d = 8;
  cc.cell.n = 2;
  cc.cell.seed = 3;
  cc.vocab = keyword.vocab;
  cc.n_classes = keyword.n_classes;
  Classifier clf(cc);
  clf.init_params(3);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.seed = 3;
  train_classifier(clf, train, test, tc);

  const double acc_before = accuracy(clf, test);
  const std::string clf_path = (dir / "clf.rkmc").string();
  save_classifier(clf_path, clf);
  const std::unique_ptr<Classifier> clf2 = load_classifier(clf_path);
  const double acc_after = accuracy(*clf2, test);
  bool probs_equal = true;
  for (const Item& item : test.items) {
    const Vec a = clf.classify(item.tokens);
    const Vec b = clf2->classify(item.tokens);
    for (size_t i = 0; i < a.size(); ++i) probs_equal &= a[i] == b[i];
  }

  // Language-model leg, with the byte table riding along.
  std::vector<uint8_t> charset;
  std::vector<int> tokens = load_chars(corpus, charset);
  tokens.resize(std::min<size_t>(tokens.size(), 4000));
  LanguageModel::Config mc;
  mc.cell.variant = CellVariant::kRkmLstm;
  mc.cell.m = 8;
  mc.cell.d = 16;
  mc.cell.n = 2;
  mc.cell.seed = 5;
  mc.vocab = static_cast<int>(charset.size());
  LanguageModel lm(mc);
  lm.init_params(5);
  const double ppl_before = lm.perplexity(tokens);
  const std::string lm_path = (dir / "lm.rkmc").string();
  save_lm(lm_path, lm, &charset);
  std::vector<uint8_t> charset2;
  const std::unique_ptr<LanguageModel> lm2 = load_lm(lm_path, &charset2);
  const double ppl_after = lm2->perplexity(tokens);

  const bool ok = acc_before == acc_after && probs_equal &&
                  ppl_before == ppl_after && charset2 == charset;
  return {ok, strf("accuracy %s, %zu probability vectors %s, perplexity %s, "
                   "byte table %s",
                   acc_before == acc_after ? "identical" : "DIFFERS",
                   test.items.size(), probs_equal ? "identical" : "DIFFER",
                   ppl_before == ppl_after ? "identical" : "DIFFERS",
                   charset2 == charset ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  const std::string corpus = argc > 2 ? argv[2] : "assets/tiny_corpus.txt";

  struct Criterion {
    const char* name;
    std::function<Outcome(const std::string&)> fn;
  };
  const Criterion criteria[] = {
      {"param-count", [](const std::string&) { return crit_param_count(); }},
      {"grad-suite", [](const std::string&) { return crit_grad_suite(); }},
      {"kernel-recursion",
       [](const std::string&) { return crit_kernel_recursion(); }},
      {"reduction-identities",
       [](const std::string&) { return crit_reduction_identities(); }},
      {"fading-memory", [](const std::string&) { return crit_fading_memory(); }},
      {"delayed-recall", [](const std::string&) { return crit_delayed_recall(); }},
      {"char-lm", [](const std::string& c) { return crit_char_lm(c); }},
      {"checkpoint-roundtrip",
       [](const std::string& c) { return crit_checkpoint_roundtrip(c); }},
  };

  bool matched = false;
  bool failed = false;
  for (const Criterion& c : criteria) {
    if (which != "all" && which != c.name) continue;
    matched = true;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn(corpus);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("%s %-21s %7.1fs  %s\n", o.ok ? "PASS" : "FAIL", c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed |= !o.ok;
  }
  if (!matched) {
    std::fprintf(stderr,
                 "unknown criterion '%s'; expected one of: all param-count "
                 "grad-suite kernel-recursion reduction-identities "
                 "fading-memory delayed-recall char-lm checkpoint-roundtrip\n",
                 which.c_str());
    return 2;
  }
  return failed ? 1 : 0;
}
