// Command-line front end: training, evaluation, and the verification
// suites (gradient checks, cross-variant identities, impulse response).
#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rkm/checkpoint.hpp"
#include "rkm/data.hpp"
#include "rkm/heads.hpp"
#include "rkm/kernel_oracle.hpp"
#include "rkm/reductions.hpp"
#include "rkm/train.hpp"

namespace {

using namespace rkm;

// Errors in flag *values* (unknown variant, contradictory task flags) are
// usage errors, same as malformed flags: usage text, exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

CellVariant variant_or_die(const std::string& name) {
  if (auto v = parse_variant(name)) return *v;
  throw UsageError("unknown variant '" + name + "'; expected one of: " +
                   variant_list());
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

// Expands `--config FILE` in place: each `key=value` line of FILE becomes
// `--key=value` unless the same option already appears on the command line
// (flags override the file). Unknown keys fall through to the parser and
// fail as unknown flags.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size())
        throw UsageError("--config needs a file argument");
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> given;
  for (const std::string& a : args)
    if (a.rfind("--", 0) == 0) given.push_back(a.substr(0, a.find('=')));

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    key = key.substr(key.find_first_not_of('-'));
    if (key.empty())
      throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    const std::string flag = "--" + key;
    if (std::find(given.begin(), given.end(), flag) != given.end()) continue;
    args.push_back(flag + "=" + value);
  }
  return args;
}

struct CommonOpts {
  std::string variant = "rkm-lstm";
  int m = 16, d = 64, n = 1, dilation = 1;
  double sigma_i_sq = 0.5, sigma_f_sq = 0.5;
  bool layer_norm = false, wavelet = false, learn_sigmas = false;
  uint64_t seed = 1;

  CellConfig cell_config() const {
    CellConfig c;
    c.variant = variant_or_die(variant);
    c.m = m;
    c.d = d;
    c.n = n;
    c.dilation = dilation;
    c.sigma_i_sq = sigma_i_sq;
    c.sigma_f_sq = sigma_f_sq;
    c.use_layer_norm = layer_norm;
    c.use_wavelet = wavelet;
    c.learn_sigmas = learn_sigmas;
    c.seed = seed;
    return c;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "cell variant (" + variant_list() + ")")
        ->capture_default_str();
    cmd->add_option("--m", m, "input/embedding width")->capture_default_str();
    cmd->add_option("--d", d, "cell width")->capture_default_str();
    cmd->add_option("--n", n, "window length")->capture_default_str();
    cmd->add_option("--dilation", dilation, "window dilation")
        ->capture_default_str();
    cmd->add_option("--sigma-i-sq", sigma_i_sq, "static input gain")
        ->capture_default_str();
    cmd->add_option("--sigma-f-sq", sigma_f_sq, "static memory gain (< 1)")
        ->capture_default_str();
    cmd->add_flag("--layer-norm", layer_norm, "normalize the cell state");
    cmd->add_flag("--wavelet", wavelet, "wavelet-parameterized content filters");
    cmd->add_flag("--learn-sigmas", learn_sigmas, "train the static gains");
    cmd->add_option("--seed", seed, "random seed")->capture_default_str();
  }
};

struct TrainOpts {
  CommonOpts common;
  std::string task;        // delayed-recall | parity | keyword | csv | signal | char-lm
  std::string data;        // input file for csv / signal / char-lm
  std::string checkpoint;  // default <out>/model.rkmc
  std::string out = ".";
  std::string optimizer = "adam";
  int lag = 10, classes = 4, length = 30, count = 4000;
  int epochs = 10, batch = 32, tbptt = 35, patience = 0;
  double lr = 1e-3, momentum = 0.9, clip = 5.0, val_frac = 0.2, target = -1.0;
};

struct EvalOpts {
  std::string checkpoint;
  std::string data;
};

void print_kv(const char* key, const std::string& v) {
  std::cout << key << "=" << v << "\n";
}
void print_kv(const char* key, double v) {
  std::printf("%s=%.17g\n", key, v);
}
void print_kv(const char* key, int64_t v) {
  std::printf("%s=%" PRId64 "\n", key, v);
}

TrainConfig train_config(const TrainOpts& o) {
  TrainConfig tc;
  if (o.optimizer == "adam")
    tc.optimizer = OptKind::kAdam;
  else if (o.optimizer == "sgd")
    tc.optimizer = OptKind::kSgdMomentum;
  else
    throw UsageError("unknown optimizer '" + o.optimizer +
                     "'; expected adam or sgd");
  tc.lr = o.lr;
  tc.momentum = o.momentum;
  tc.clip_norm = o.clip;
  tc.batch_size = o.batch;
  tc.epochs = o.epochs;
  tc.patience = o.patience;
  tc.tbptt = o.tbptt;
  tc.target_metric = o.target;
  tc.seed = o.common.seed;
  return tc;
}

int cmd_train(const TrainOpts& o) {
  namespace fs = std::filesystem;
  std::string task = o.task;
  if (task.empty()) {
    if (o.data.empty())
      throw UsageError("train needs --task, or --data with a token CSV");
    task = "csv";
  }
  fs::create_directories(o.out);
  const std::string report_path = (fs::path(o.out) / "report.csv").string();
  const std::string ckpt_path =
      o.checkpoint.empty() ? (fs::path(o.out) / "model.rkmc").string()
                           : o.checkpoint;
  const TrainConfig tc = train_config(o);
  print_kv("command", std::string("train"));
  print_kv("task", task);
  print_kv("variant", o.common.variant);

  if (task == "char-lm") {
    if (o.data.empty()) throw UsageError("--task char-lm needs --data <text>");
    std::vector<uint8_t> charset;
    const std::vector<int> tokens = load_chars(o.data, charset);
    const size_t cut =
        static_cast<size_t>((1.0 - o.val_frac) * tokens.size() + 0.5);
    if (cut < 2 || cut + 2 > tokens.size())
      throw std::runtime_error("text too short for the requested split");
    LanguageModel::Config mc;
    mc.cell = o.common.cell_config();
    mc.vocab = static_cast<int>(charset.size());
    LanguageModel model(mc);
    model.init_params(o.common.seed);
    print_kv("vocab", static_cast<int64_t>(mc.vocab));
    print_kv("params", static_cast<int64_t>(model.params().scalar_count()));
    print_kv("train_tokens", static_cast<int64_t>(cut));
    print_kv("val_tokens", static_cast<int64_t>(tokens.size() - cut));
    TrainReport rep = train_lm(
        model, std::span<const int>(tokens.data(), cut),
        std::span<const int>(tokens.data() + cut, tokens.size() - cut), tc);
    rep.write_csv(report_path);
    save_lm(ckpt_path, model, &charset);
    print_kv("epochs_run", static_cast<int64_t>(rep.rows.size()));
    print_kv("best_epoch", static_cast<int64_t>(rep.best_epoch));
    print_kv("perplexity", rep.best_val);
    print_kv("report", report_path);
    print_kv("checkpoint", ckpt_path);
    return 0;
  }

  SequenceDataset all;
  if (task == "delayed-recall")
    all = gen_delayed_recall(o.lag, o.classes, o.length, o.count, o.common.seed);
  else if (task == "parity")
    all = gen_parity(o.length, o.count, o.common.seed);
  else if (task == "keyword")
    all = gen_keyword(o.count, o.common.seed);
  else if (task == "csv" || task == "signal") {
    if (o.data.empty()) throw UsageError("--task " + task + " needs --data");
    all = task == "csv" ? load_token_csv(o.data) : load_signal_matrix(o.data);
  } else {
    throw UsageError("unknown task '" + task +
                     "'; expected delayed-recall, parity, keyword, csv, "
                     "signal, or char-lm");
  }

  auto [train_ds, val_ds] = split_dataset(all, 1.0 - o.val_frac);
  if (train_ds.items.empty() || val_ds.items.empty())
    throw std::runtime_error("dataset too small for the requested split");
  Classifier::Config mc;
  mc.cell = o.common.cell_config();
  mc.vocab = all.vocab;
  if (!all.token_mode()) mc.cell.m = all.channels;  // raw mode: m is given by data
  mc.n_classes = all.n_classes;
  Classifier model(mc);
  model.init_params(o.common.seed);
  print_kv("vocab", static_cast<int64_t>(mc.vocab));
  print_kv("classes", static_cast<int64_t>(mc.n_classes));
  print_kv("params", static_cast<int64_t>(model.params().scalar_count()));
  print_kv("train_items", static_cast<int64_t>(train_ds.items.size()));
  print_kv("val_items", static_cast<int64_t>(val_ds.items.size()));
  TrainReport rep = train_classifier(model, train_ds, val_ds, tc);
  rep.write_csv(report_path);
  save_classifier(ckpt_path, model);
  print_kv("epochs_run", static_cast<int64_t>(rep.rows.size()));
  print_kv("best_epoch", static_cast<int64_t>(rep.best_epoch));
  print_kv("accuracy", rep.best_val);
  print_kv("report", report_path);
  print_kv("checkpoint", ckpt_path);
  return 0;
}

struct GenOpts {
  std::string task = "delayed-recall";
  std::string out;
  std::string format = "token";  // token | signal | signal-csv
  int lag = 10, classes = 4, length = 30, count = 1000;
  uint64_t seed = 1;
};

int cmd_gen(const GenOpts& o) {
  if (o.out.empty()) throw UsageError("gen needs --out <file>");
  SequenceDataset ds;
  if (o.task == "delayed-recall")
    ds = gen_delayed_recall(o.lag, o.classes, o.length, o.count, o.seed);
  else if (o.task == "parity")
    ds = gen_parity(o.length, o.count, o.seed);
  else if (o.task == "keyword")
    ds = gen_keyword(o.count, o.seed);
  else
    throw UsageError("unknown task '" + o.task +
                     "'; expected delayed-recall, parity, or keyword");
  if (o.format == "token")
    save_token_csv(o.out, ds);
  else if (o.format == "signal" || o.format == "signal-csv") {
    // tokens become one-hot rows so raw-feature models can consume them
    SequenceDataset raw;
    raw.channels = ds.vocab;
    raw.n_classes = ds.n_classes;
    for (const Item& it : ds.items) {
      Item r;
      r.label = it.label;
      r.feats = Matrix(static_cast<int>(it.tokens.size()), ds.vocab);
      for (size_t p = 0; p < it.tokens.size(); ++p)
        r.feats.at(static_cast<int>(p), it.tokens[p]) = 1.0;
      raw.items.push_back(std::move(r));
    }
    if (o.format == "signal")
      save_signal_matrix(o.out, raw);
    else
      save_signal_matrix_csv(o.out, raw);
  } else {
    throw UsageError("unknown format '" + o.format +
                     "'; expected token, signal, or signal-csv");
  }
  print_kv("items", static_cast<int64_t>(ds.items.size()));
  print_kv("out", o.out);
  return 0;
}

int cmd_eval(const EvalOpts& o) {
  const HeadKind kind = peek_head_kind(o.checkpoint);
  if (kind == HeadKind::kClassifier) {
    auto model = load_classifier(o.checkpoint);
    SequenceDataset ds = model->config().vocab > 0
                             ? load_token_csv(o.data)
                             : load_signal_matrix(o.data);
    if (ds.token_mode() && ds.vocab != model->config().vocab)
      throw std::runtime_error(
          o.data + ": vocabulary size " + std::to_string(ds.vocab) +
          " does not match the model's " +
          std::to_string(model->config().vocab));
    print_kv("items", static_cast<int64_t>(ds.items.size()));
    print_kv("accuracy", accuracy(*model, ds));
    return 0;
  }
  if (kind == HeadKind::kLanguageModel) {
    std::vector<uint8_t> charset;
    auto model = load_lm(o.checkpoint, &charset);
    std::vector<int> tokens;
    if (charset.empty()) {
      tokens = load_chars(o.data, charset);
      if (static_cast<int>(charset.size()) != model->config().vocab)
        throw std::runtime_error(
            o.data + ": character set size " + std::to_string(charset.size()) +
            " does not match the model's vocabulary " +
            std::to_string(model->config().vocab));
    } else {
      tokens = load_chars_as(o.data, charset);
    }
    print_kv("tokens", static_cast<int64_t>(tokens.size()));
    print_kv("perplexity", model->perplexity(tokens));
    return 0;
  }
  throw std::runtime_error(o.checkpoint +
                           ": bare cell checkpoint has nothing to evaluate");
}

int cmd_gradcheck(uint64_t seed, double eps, double tol) {
  double worst = 0.0;
  std::string worst_where;
  int idx = 0;
  auto report = [&](const std::string& label, const CellConfig& cfg) {
    GradCheckResult r = grad_check_cell(cfg, 6, seed + idx++, eps);
    std::printf("variant=%-24s n=%d max_rel_err=%.3e worst=%s\n", label.c_str(),
                cfg.n, r.max_rel_err, r.worst_param.c_str());
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_where = label + " n=" + std::to_string(cfg.n);
    }
  };
  for (CellVariant v : kAllVariants)
    for (int n : {1, 3}) {
      CellConfig cfg;
      cfg.variant = v;
      cfg.m = 3;
      cfg.d = 4;
      cfg.n = n;
      report(variant_name(v), cfg);
    }
  // The decorated paths: normalized state, wavelet filters, learned gains.
  {
    CellConfig cfg;
    cfg.variant = CellVariant::kRkmLstm;
    cfg.m = 3;
    cfg.d = 4;
    cfg.n = 3;
    cfg.use_layer_norm = true;
    cfg.use_wavelet = true;
    cfg.learn_sigmas = true;
    report("rkm-lstm+ln+wavelet+sigmas", cfg);
  }
  {
    CellConfig cfg;
    cfg.variant = CellVariant::kLinearKernelOutGate;
    cfg.m = 3;
    cfg.d = 4;
    cfg.n = 2;
    cfg.learn_sigmas = true;
    report("linear-kernel-outgate+sigmas", cfg);
  }
  print_kv("max_rel_err", worst);
  if (worst > tol) {
    std::printf("FAIL worst case %s exceeds %.1e\n", worst_where.c_str(), tol);
    return 1;
  }
  std::printf("PASS all gradients within %.1e\n", tol);
  return 0;
}

int cmd_equiv(uint64_t seed, int seeds) {
  struct Row {
    std::string name;
    double max_diff = 0.0;
    bool exact = false;
    double tol = 0.0;
    bool pass = true;
  };
  std::vector<Row> rows;
  auto fold = [&](const IdentityReport& r) {
    for (Row& row : rows)
      if (row.name == r.name) {
        row.max_diff = std::max(row.max_diff, r.max_abs_diff);
        row.pass = row.pass && r.pass;
        return;
      }
    rows.push_back({r.name, r.max_abs_diff, r.exact, r.tolerance, r.pass});
  };
  for (int s = 0; s < seeds; ++s) {
    const uint64_t k = seed + static_cast<uint64_t>(s);
    const int n = 1 + (s % 3);  // exercise several window lengths
    fold(check_identity_gated_cnn(k, n));
    fold(check_identity_ran(k));
    fold(check_identity_cifg(k, n));
    fold(check_identity_cnn(k, n));
    fold(check_nested_vs_recursive(k));
  }
  bool all_pass = true;
  for (const Row& r : rows) {
    std::printf("%s %s seeds=%d max_abs_diff=%.3e %s\n",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), seeds, r.max_diff,
                r.exact ? "(exact)" : "");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_impulse(const std::string& variant, double si2, double sf2, int lags,
                const std::string& out) {
  const CellVariant v = variant_or_die(variant);
  const std::vector<ImpulseRow> rows = impulse_response(v, si2, sf2, lags);
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw std::runtime_error("cannot write " + out);
    os = &file;
  }
  *os << "lag,measured,predicted,ratio\n";
  char buf[160];
  for (const ImpulseRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.lag, r.measured,
                  r.predicted, r.ratio);
    *os << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent kernel machine cells: train, evaluate, verify"};
  app.require_subcommand(1);

  TrainOpts t;
  CLI::App* train = app.add_subcommand("train", "train a model");
  t.common.attach(train);
  train->add_option("--task", t.task,
                    "delayed-recall | parity | keyword | csv | signal | char-lm");
  train->add_option("--data", t.data, "input file (csv / signal / char-lm)");
  train->add_option("--checkpoint", t.checkpoint, "model file to write");
  train->add_option("--out", t.out, "output directory")->capture_default_str();
  train->add_option("--optimizer", t.optimizer, "adam | sgd")
      ->capture_default_str();
  train->add_option("--lag", t.lag, "delayed-recall: recall distance")
      ->capture_default_str();
  train->add_option("--classes", t.classes, "delayed-recall: symbol count")
      ->capture_default_str();
  train->add_option("--length", t.length, "generated sequence length")
      ->capture_default_str();
  train->add_option("--count", t.count, "generated dataset size")
      ->capture_default_str();
  train->add_option("--lr", t.lr, "learning rate")->capture_default_str();
  train->add_option("--momentum", t.momentum, "sgd momentum")
      ->capture_default_str();
  train->add_option("--clip", t.clip, "global gradient-norm clip")
      ->capture_default_str();
  train->add_option("--epochs", t.epochs, "training epochs")
      ->capture_default_str();
  train->add_option("--batch", t.batch, "batch size / parallel streams")
      ->capture_default_str();
  train->add_option("--tbptt", t.tbptt, "truncation window (char-lm)")
      ->capture_default_str();
  train->add_option("--patience", t.patience,
                    "early stop after this many stale epochs (0 = off)")
      ->capture_default_str();
  train->add_option("--val-frac", t.val_frac, "validation fraction")
      ->capture_default_str();
  train->add_option("--target", t.target,
                    "stop at this validation metric (accuracy >=, ppl <=)")
      ->capture_default_str();

  GenOpts g;
  CLI::App* gen = app.add_subcommand("gen", "write a generated dataset");
  gen->add_option("--task", g.task, "delayed-recall | parity | keyword")
      ->capture_default_str();
  gen->add_option("--out", g.out, "output file")->required();
  gen->add_option("--format", g.format, "token | signal | signal-csv")
      ->capture_default_str();
  gen->add_option("--lag", g.lag, "delayed-recall: recall distance")
      ->capture_default_str();
  gen->add_option("--classes", g.classes, "delayed-recall: symbol count")
      ->capture_default_str();
  gen->add_option("--length", g.length, "sequence length")
      ->capture_default_str();
  gen->add_option("--count", g.count, "dataset size")->capture_default_str();
  gen->add_option("--seed", g.seed, "random seed")->capture_default_str();

  EvalOpts e;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", e.checkpoint, "model file")->required();
  eval->add_option("--data", e.data, "dataset / text file")->required();

  uint64_t gc_seed = 7;
  double gc_eps = 1e-5, gc_tol = 1e-5;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference audit of every variant");
  gradcheck->add_option("--seed", gc_seed, "random seed")->capture_default_str();
  gradcheck->add_option("--eps", gc_eps, "finite-difference step")
      ->capture_default_str();
  gradcheck->add_option("--tol", gc_tol, "max relative error allowed")
      ->capture_default_str();

  CommonOpts pc;
  CLI::App* paramcount =
      app.add_subcommand("paramcount", "weight count for a configuration");
  pc.attach(paramcount);

  uint64_t eq_seed = 1;
  int eq_seeds = 10;
  CLI::App* equiv = app.add_subcommand(
      "equiv", "cross-variant identities and the kernel-recursion check");
  equiv->add_option("--seed", eq_seed, "base seed")->capture_default_str();
  equiv->add_option("--seeds", eq_seeds, "number of random trials")
      ->capture_default_str();

  std::string imp_variant = "linear-kernel", imp_out;
  double imp_si2 = 0.5, imp_sf2 = 0.5;
  int imp_lags = 10;
  CLI::App* impulse = app.add_subcommand(
      "impulse", "memory impulse response vs the geometric prediction");
  impulse->add_option("--variant", imp_variant, "static-gain variant")
      ->capture_default_str();
  impulse->add_option("--sigma-i-sq", imp_si2, "static input gain")
      ->capture_default_str();
  impulse->add_option("--sigma-f-sq", imp_sf2, "static memory gain")
      ->capture_default_str();
  impulse->add_option("--lags", imp_lags, "largest lag to report")
      ->capture_default_str();
  impulse->add_option("--out", imp_out, "CSV file (default stdout)");

  // Every subcommand takes an optional key=value config file; it is
  // expanded before parsing so that explicit flags always win.
  std::string config_doc;
  for (CLI::App* sub : {train, gen, eval, gradcheck, paramcount, equiv, impulse})
    sub->add_option("--config", config_doc,
                    "key=value config file (flags override)");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = apply_config_file(std::move(args));
  } catch (const UsageError& u) {
    std::cerr << "error: " << u.what() << "\n";
    return 2;
  }
  std::vector<const char*> cargv;
  cargv.push_back(argv[0]);
  for (const std::string& a : args) cargv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& p) {
    app.exit(p);
    return 2;
  }

  try {
    if (app.got_subcommand(train)) return cmd_train(t);
    if (app.got_subcommand(gen)) return cmd_gen(g);
    if (app.got_subcommand(eval)) return cmd_eval(e);
    if (app.got_subcommand(gradcheck))
      return cmd_gradcheck(gc_seed, gc_eps, gc_tol);
    if (app.got_subcommand(paramcount)) {
      std::cout << param_count(variant_or_die(pc.variant), pc.m, pc.d, pc.n)
                << "\n";
      return 0;
    }
    if (app.got_subcommand(equiv)) return cmd_equiv(eq_seed, eq_seeds);
    if (app.got_subcommand(impulse))
      return cmd_impulse(imp_variant, imp_si2, imp_sf2, imp_lags, imp_out);
  } catch (const UsageError& u) {
    std::cerr << "error: " << u.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
