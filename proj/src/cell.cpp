#include "rkm/cell.hpp"

#include <cmath>
#include <stdexcept>

namespace rkm {

const char* variant_name(CellVariant v) {
  switch (v) {
    case CellVariant::kLstm: return "lstm";
    case CellVariant::kRkmLstm: return "rkm-lstm";
    case CellVariant::kRkmCifg: return "rkm-cifg";
    case CellVariant::kLinearKernelOutGate: return "linear-kernel-outgate";
    case CellVariant::kLinearKernel: return "linear-kernel";
    case CellVariant::kGatedCnn: return "gated-cnn";
    case CellVariant::kCnn: return "cnn";
  }
  return "?";
}

std::optional<CellVariant> parse_variant(std::string_view s) {
  for (CellVariant v : kAllVariants)
    if (s == variant_name(v)) return v;
  return std::nullopt;
}

std::string variant_list() {
  std::string out;
  for (CellVariant v : kAllVariants) {
    if (!out.empty()) out += ", ";
    out += variant_name(v);
  }
  return out;
}

bool variant_recurrent(CellVariant v) {
  return v != CellVariant::kGatedCnn && v != CellVariant::kCnn;
}

bool variant_static_gains(CellVariant v) {
  switch (v) {
    case CellVariant::kLinearKernelOutGate:
    case CellVariant::kLinearKernel:
    case CellVariant::kGatedCnn:
    case CellVariant::kCnn:
      return true;
    default:
      return false;
  }
}

namespace {

bool has_gate_o(CellVariant v) {
  switch (v) {
    case CellVariant::kLstm:
    case CellVariant::kRkmLstm:
    case CellVariant::kRkmCifg:
    case CellVariant::kLinearKernelOutGate:
      return true;
    default:
      return false;
  }
}

bool has_gate_eta(CellVariant v) {
  return v == CellVariant::kLstm || v == CellVariant::kRkmLstm ||
         v == CellVariant::kGatedCnn;
}

bool has_gate_f(CellVariant v) {
  return v == CellVariant::kLstm || v == CellVariant::kRkmLstm ||
         v == CellVariant::kRkmCifg;
}

int gate_count(CellVariant v) {
  return (has_gate_o(v) ? 1 : 0) + (has_gate_eta(v) ? 1 : 0) +
         (has_gate_f(v) ? 1 : 0);
}

}  // namespace

void CellConfig::validate_and_normalize() {
  if (m < 1 || d < 1 || n < 1 || dilation < 1)
    throw std::invalid_argument("CellConfig: m, d, n, dilation must be >= 1");
  if (sigma_i_sq < 0.0 || sigma_i_sq > 1.0 || sigma_f_sq < 0.0 || sigma_f_sq > 1.0)
    throw std::invalid_argument("CellConfig: gains must lie in [0, 1]");
  if (!variant_recurrent(variant)) sigma_f_sq = 0.0;  // feedforward: no memory
  if (variant_static_gains(variant) && variant_recurrent(variant) &&
      sigma_f_sq >= 1.0)
    throw std::invalid_argument(
        "CellConfig: memory gain must stay below 1 for a stable static cell");
  if (ln_eps <= 0.0) throw std::invalid_argument("CellConfig: ln_eps must be > 0");
}

Cell::Cell(CellConfig cfg) : cfg_(cfg) {
  cfg_.validate_and_normalize();
  const int m = cfg_.m, d = cfg_.d, n = cfg_.n;
  const bool rec = variant_recurrent(cfg_.variant);

  auto make_bank = [&](const std::string& prefix, bool bias) {
    BankParams bank;
    bank.x.reserve(n);
    for (int k = 0; k < n; ++k)
      bank.x.emplace_back(prefix + ".x." + std::to_string(k), d, m);
    if (rec) bank.h.emplace(prefix + ".h", d, d);
    if (bias) bank.b.emplace(prefix + ".b", d);
    return bank;
  };

  if (cfg_.use_wavelet) {
    wavelet_.emplace(d, m, n);
    if (rec) content_.h.emplace("c.h", d, d);
  } else {
    content_ = make_bank("c", /*bias=*/false);
  }
  if (cfg_.variant == CellVariant::kLstm) content_.b.emplace("c.b", d);

  if (has_gate_o(cfg_.variant)) o_ = make_bank("o", /*bias=*/true);
  if (has_gate_eta(cfg_.variant)) eta_ = make_bank("eta", /*bias=*/true);
  if (has_gate_f(cfg_.variant)) f_ = make_bank("f", /*bias=*/true);

  if (cfg_.use_layer_norm) {
    ln_gain_.emplace("ln.gain", d);
    ln_bias_.emplace("ln.bias", d);
  }
  if (cfg_.learn_sigmas && variant_static_gains(cfg_.variant)) {
    sigma_i_.emplace("sigma_i_sq", 1);
    // The memory gain stays a fixed zero for feedforward variants.
    if (rec) sigma_f_.emplace("sigma_f_sq", 1);
  }
  register_params();
}

void Cell::register_params() {
  auto reg_bank = [&](BankParams& bank) {
    for (Parameter& p : bank.x) params_.add(p);
    if (bank.h) params_.add(*bank.h);
    if (bank.b) params_.add(*bank.b);
  };
  if (wavelet_)
    for (Parameter* p : wavelet_->params()) params_.add(*p);
  reg_bank(content_);
  if (o_) reg_bank(*o_);
  if (eta_) reg_bank(*eta_);
  if (f_) reg_bank(*f_);
  if (ln_gain_) params_.add(*ln_gain_);
  if (ln_bias_) params_.add(*ln_bias_);
  if (sigma_i_) params_.add(*sigma_i_);
  if (sigma_f_) params_.add(*sigma_f_);
}

void Cell::init_params(uint64_t seed) {
  Rng rng(seed);
  const double nm = static_cast<double>(cfg_.n) * cfg_.m;
  const double r_x = std::sqrt(6.0 / (nm + cfg_.d));
  const double r_h = std::sqrt(6.0 / (2.0 * cfg_.d));

  auto init_bank = [&](BankParams& bank, bool forget) {
    for (Parameter& p : bank.x) fill_uniform(rng, p.value, -r_x, r_x);
    if (bank.h) fill_uniform(rng, bank.h->value, -r_h, r_h);
    if (bank.b)
      std::fill(bank.b->value.begin(), bank.b->value.end(), forget ? 1.0 : 0.0);
  };

  if (wavelet_) {
    wavelet_->init(rng);
    if (content_.h) fill_uniform(rng, content_.h->value, -r_h, r_h);
  } else {
    init_bank(content_, false);
  }
  if (o_) init_bank(*o_, false);
  if (eta_) init_bank(*eta_, false);
  if (f_) init_bank(*f_, true);  // open forget gate at the start
  if (ln_gain_) std::fill(ln_gain_->value.begin(), ln_gain_->value.end(), 1.0);
  if (ln_bias_) std::fill(ln_bias_->value.begin(), ln_bias_->value.end(), 0.0);
  if (sigma_i_) sigma_i_->value[0] = cfg_.sigma_i_sq;
  if (sigma_f_) sigma_f_->value[0] = cfg_.sigma_f_sq;
}

size_t Cell::weight_scalar_count() const {
  auto bank_weights = [&](const BankParams& bank) {
    size_t c = 0;
    for (const Parameter& p : bank.x) c += p.size();
    if (bank.h) c += bank.h->size();
    return c;  // biases excluded
  };
  size_t total = wavelet_ ? wavelet_->scalar_count() +
                                (content_.h ? content_.h->size() : 0)
                          : bank_weights(content_);
  if (o_) total += bank_weights(*o_);
  if (eta_) total += bank_weights(*eta_);
  if (f_) total += bank_weights(*f_);
  return total;
}

size_t param_count(CellVariant v, int m, int d, int n) {
  if (m < 1 || d < 1 || n < 1)
    throw std::invalid_argument("param_count: dims must be >= 1");
  const size_t nm = static_cast<size_t>(n) * m;
  const size_t dd = static_cast<size_t>(d);
  const size_t banks = 1 + gate_count(v);
  const size_t per_bank = variant_recurrent(v) ? (nm + dd) * dd : nm * dd;
  return banks * per_bank;
}

Cell::State Cell::initial_state(Tape& t) const {
  return {t.zeros(cfg_.d), t.zeros(cfg_.d)};
}

Value Cell::bank_preact(Tape& t, BankParams& bank, std::span<const Value> lags,
                        Value h_prev) {
  Value acc;
  for (int k = 0; k < cfg_.n; ++k) {
    Value wk = bank.x.empty() ? wavelet_->block(t, k) : t.use(bank.x[k]);
    Value term = t.affine(wk, lags[k]);
    acc = (k == 0) ? term : t.add(acc, term);
  }
  if (bank.h) acc = t.add(acc, t.affine(t.use(*bank.h), h_prev));
  if (bank.b) acc = t.add(acc, t.use(*bank.b));
  return acc;
}

Value Cell::content_preact(Tape& t, std::span<const Value> lags, Value h_prev) {
  return bank_preact(t, content_, lags, h_prev);
}

Cell::State Cell::step(Tape& t, std::span<const Value> lags, const State& prev) {
  if (static_cast<int>(lags.size()) != cfg_.n)
    throw ShapeError("step: got " + std::to_string(lags.size()) +
                     " lag columns, window needs " + std::to_string(cfg_.n));

  Value ctilde = content_preact(t, lags, prev.h);
  if (cfg_.variant == CellVariant::kLstm) ctilde = t.tanh_(ctilde);

  std::optional<Value> o, eta, f;
  if (o_) o = t.sigmoid(bank_preact(t, *o_, lags, prev.h));
  if (eta_) eta = t.sigmoid(bank_preact(t, *eta_, lags, prev.h));
  if (f_) f = t.sigmoid(bank_preact(t, *f_, lags, prev.h));

  Value c;
  switch (cfg_.variant) {
    case CellVariant::kLstm:
    case CellVariant::kRkmLstm:
      c = t.add(t.hadamard(*eta, ctilde), t.hadamard(*f, prev.c));
      break;
    case CellVariant::kRkmCifg:
      c = t.add(t.hadamard(t.axpb(*f, -1.0, 1.0), ctilde),
                t.hadamard(*f, prev.c));
      break;
    default: {  // static gains
      Value ci = sigma_i_ ? t.scale_by(t.use(*sigma_i_), ctilde)
                          : t.axpb(ctilde, cfg_.sigma_i_sq);
      Value cf = sigma_f_ ? t.scale_by(t.use(*sigma_f_), prev.c)
                          : t.axpb(prev.c, cfg_.sigma_f_sq);
      c = t.add(ci, cf);
      break;
    }
  }
  if (ln_gain_)
    c = t.layer_norm(c, t.use(*ln_gain_), t.use(*ln_bias_), cfg_.ln_eps);

  Value h;
  switch (cfg_.variant) {
    case CellVariant::kLstm:
      h = t.hadamard(*o, t.tanh_(c));
      break;
    case CellVariant::kRkmLstm:
    case CellVariant::kRkmCifg:
    case CellVariant::kLinearKernelOutGate:
      h = t.hadamard(*o, c);
      break;
    case CellVariant::kGatedCnn:
      h = t.hadamard(*eta, c);
      break;
    case CellVariant::kLinearKernel:
    case CellVariant::kCnn:
      h = t.tanh_(c);
      break;
  }
  return {c, h};
}

std::vector<Value> Cell::run_sequence(Tape& t, std::span<const Value> xs) {
  if (xs.empty()) throw std::invalid_argument("run_sequence: empty sequence");
  const Value pad = t.zeros(cfg_.m);
  State st = initial_state(t);
  std::vector<Value> lags(cfg_.n);
  std::vector<Value> out;
  out.reserve(xs.size());
  for (int s = 0; s < static_cast<int>(xs.size()); ++s) {
    for (int k = 0; k < cfg_.n; ++k) {
      const int src = s - k * cfg_.dilation;
      lags[k] = src >= 0 ? xs[src] : pad;
    }
    st = step(t, lags, st);
    out.push_back(st.h);
  }
  return out;
}

std::vector<Value> Cell::run_sequence(Tape& t, std::span<const double> seq,
                                      int T) {
  if (static_cast<int>(seq.size()) != T * cfg_.m)
    throw ShapeError("run_sequence: buffer holds " + std::to_string(seq.size()) +
                     " reals, expected " + std::to_string(T) + "x" +
                     std::to_string(cfg_.m));
  std::vector<Value> xs;
  xs.reserve(T);
  for (int s = 0; s < T; ++s)
    xs.push_back(t.leaf(seq.subspan(static_cast<size_t>(s) * cfg_.m, cfg_.m),
                        cfg_.m));
  return run_sequence(t, xs);
}

GradCheckResult grad_check_cell(const CellConfig& cfg, int seq_len,
                                uint64_t seed, double fd_eps) {
  Cell cell(cfg);
  cell.init_params(seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  Vec seq(static_cast<size_t>(seq_len) * cfg.m);
  fill_uniform(rng, seq, -1.0, 1.0);
  Vec wts(static_cast<size_t>(seq_len) * cell.config().d);
  fill_uniform(rng, wts, -1.0, 1.0);
  const int d = cell.config().d;

  auto build_loss = [&](Tape& t) -> Value {
    const std::vector<Value> hs = cell.run_sequence(t, seq, seq_len);
    Value acc;
    for (int s = 0; s < seq_len; ++s) {
      Value w = t.leaf(std::span<const double>(wts).subspan(
                           static_cast<size_t>(s) * d, d),
                       d);
      Value term = t.sum_all(t.hadamard(w, hs[s]));
      acc = (s == 0) ? term : t.add(acc, term);
    }
    return acc;
  };

  Tape t;
  Value loss = build_loss(t);
  cell.params().zero_grads();
  t.backward(loss);

  auto f = [&]() {
    Tape ft;
    return ft.data(build_loss(ft))[0];
  };
  return compare_grads(f, cell.params(), fd_eps);
}

}  // namespace rkm
