#include "rkm/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rkm {

Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

namespace {

void check_tokens(std::span<const int> tokens, int vocab, const char* who) {
  for (int tok : tokens)
    if (tok < 0 || tok >= vocab)
      throw std::out_of_range(std::string(who) + ": token id " +
                              std::to_string(tok) + " outside vocabulary of " +
                              std::to_string(vocab));
}

}  // namespace

Classifier::Classifier(Config cfg)
    : cfg_(cfg),
      cell_(cfg.cell),
      fc1_w_("head.fc1.w", cfg.cell.d, cfg.cell.d),
      fc1_b_("head.fc1.b", cfg.cell.d),
      fc2_w_("head.fc2.w", cfg.n_classes, cfg.cell.d),
      fc2_b_("head.fc2.b", cfg.n_classes) {
  if (cfg_.n_classes < 2)
    throw std::invalid_argument("Classifier: need at least 2 classes");
  if (cfg_.vocab < 0)
    throw std::invalid_argument("Classifier: vocab must be >= 0");
  if (cfg_.vocab > 0) emb_.emplace("head.emb", cfg_.vocab, cfg_.cell.m);
  cfg_.cell = cell_.config();  // pick up normalization
  if (emb_) params_.add(*emb_);
  for (Parameter* p : cell_.params().items()) params_.add(*p);
  params_.add(fc1_w_);
  params_.add(fc1_b_);
  params_.add(fc2_w_);
  params_.add(fc2_b_);
}

void Classifier::init_params(uint64_t seed) {
  cell_.init_params(seed);
  Rng rng(seed ^ 0xda3e39cb94b95bdbull);
  const int d = cfg_.cell.d;
  if (emb_) {
    const double r = std::sqrt(6.0 / (cfg_.vocab + cfg_.cell.m));
    fill_uniform(rng, emb_->value, -r, r);
  }
  const double r1 = std::sqrt(6.0 / (2.0 * d));
  fill_uniform(rng, fc1_w_.value, -r1, r1);
  std::fill(fc1_b_.value.begin(), fc1_b_.value.end(), 0.0);
  const double r2 = std::sqrt(6.0 / (d + cfg_.n_classes));
  fill_uniform(rng, fc2_w_.value, -r2, r2);
  std::fill(fc2_b_.value.begin(), fc2_b_.value.end(), 0.0);
}

std::vector<Value> Classifier::embed(Tape& t, std::span<const int> tokens) {
  check_tokens(tokens, cfg_.vocab, "Classifier");
  Value table = t.use(*emb_);
  std::vector<Value> xs;
  xs.reserve(tokens.size());
  for (int tok : tokens) xs.push_back(t.row(table, tok));
  return xs;
}

Value Classifier::head(Tape& t, const std::vector<Value>& hs) {
  Value pooled = t.mean_pool(hs);
  Value hidden = t.tanh_(t.affine(t.use(fc1_w_), pooled, t.use(fc1_b_)));
  return t.affine(t.use(fc2_w_), hidden, t.use(fc2_b_));
}

Value Classifier::logits(Tape& t, std::span<const int> tokens) {
  if (!emb_)
    throw std::logic_error("Classifier: token input in raw-feature mode");
  if (tokens.empty()) throw std::invalid_argument("Classifier: empty sequence");
  return head(t, cell_.run_sequence(t, embed(t, tokens)));
}

Value Classifier::logits(Tape& t, std::span<const double> feats, int T) {
  if (emb_)
    throw std::logic_error("Classifier: raw-feature input in token mode");
  if (T < 1) throw std::invalid_argument("Classifier: empty sequence");
  return head(t, cell_.run_sequence(t, feats, T));
}

Vec Classifier::classify(std::span<const int> tokens) {
  Tape t;
  return softmax(t.data(logits(t, tokens)));
}

Vec Classifier::classify(std::span<const double> feats, int T) {
  Tape t;
  return softmax(t.data(logits(t, feats, T)));
}

LanguageModel::LanguageModel(Config cfg)
    : cfg_(cfg),
      cell_(cfg.cell),
      emb_("head.emb", cfg.vocab, cfg.cell.m),
      out_w_("head.A", cfg.vocab, cfg.cell.d),
      out_b_("head.beta", cfg.vocab) {
  if (cfg_.vocab < 2)
    throw std::invalid_argument("LanguageModel: vocab must be >= 2");
  if (cfg_.cell.d > cfg_.vocab)
    throw std::invalid_argument(
        "LanguageModel: factor width d = " + std::to_string(cfg_.cell.d) +
        " may not exceed vocab = " + std::to_string(cfg_.vocab));
  cfg_.cell = cell_.config();
  params_.add(emb_);
  for (Parameter* p : cell_.params().items()) params_.add(*p);
  params_.add(out_w_);
  params_.add(out_b_);
}

void LanguageModel::init_params(uint64_t seed) {
  cell_.init_params(seed);
  Rng rng(seed ^ 0xc2b2ae3d27d4eb4full);
  const double re = std::sqrt(6.0 / (cfg_.vocab + cfg_.cell.m));
  fill_uniform(rng, emb_.value, -re, re);
  const double ra = std::sqrt(6.0 / (cfg_.vocab + cfg_.cell.d));
  fill_uniform(rng, out_w_.value, -ra, ra);
  std::fill(out_b_.value.begin(), out_b_.value.end(), 0.0);
}

Cell::State LanguageModel::seed_state(Tape& t, const StreamState& s) {
  if (!s.started) return cell_.initial_state(t);
  return {t.leaf(s.c, cfg_.cell.d), t.leaf(s.h, cfg_.cell.d)};
}

Value LanguageModel::window_loss(Tape& t, std::span<const int> tokens,
                                 size_t start, size_t len, StreamState& state) {
  if (len < 2)
    throw std::invalid_argument("window_loss: need at least 2 tokens");
  if (start + len > tokens.size())
    throw std::out_of_range("window_loss: window past end of stream");
  check_tokens(tokens, cfg_.vocab, "LanguageModel");

  Value table = t.use(emb_);
  Cell::State st = seed_state(t, state);
  const Value pad = t.zeros(cfg_.cell.m);
  auto embed_at = [&](int pos) { return t.row(table, tokens[pos]); };

  std::vector<Value> lags(cfg_.cell.n);
  std::vector<Value> losses;
  losses.reserve(len - 1);
  for (size_t i = start; i + 1 < start + len; ++i) {
    for (int k = 0; k < cfg_.cell.n; ++k) {
      const int src = static_cast<int>(i) - k * cfg_.cell.dilation;
      lags[k] = src >= 0 ? embed_at(src) : pad;
    }
    st = cell_.step(t, lags, st);
    Value y = t.affine(t.use(out_w_), st.h, t.use(out_b_));
    losses.push_back(t.softmax_xent(y, tokens[i + 1]).loss);
  }
  // carry the final state out as plain numbers
  state.started = true;
  state.c.assign(t.data(st.c).begin(), t.data(st.c).end());
  state.h.assign(t.data(st.h).begin(), t.data(st.h).end());
  return t.mean_pool(losses);
}

Vec LanguageModel::predict_next(std::span<const int> history) {
  if (history.empty())
    throw std::invalid_argument("predict_next: empty history");
  check_tokens(history, cfg_.vocab, "LanguageModel");
  Tape t;
  Value table = t.use(emb_);
  std::vector<Value> xs;
  xs.reserve(history.size());
  for (int tok : history) xs.push_back(t.row(table, tok));
  const std::vector<Value> hs = cell_.run_sequence(t, xs);
  Value y = t.affine(t.use(out_w_), hs.back(), t.use(out_b_));
  return softmax(t.data(y));
}

double LanguageModel::perplexity(std::span<const int> tokens, int window) {
  if (tokens.size() < 2)
    throw std::invalid_argument("perplexity: need at least 2 tokens");
  if (window < 2) throw std::invalid_argument("perplexity: window too small");
  StreamState state;
  Tape t;
  double nll = 0.0;
  size_t count = 0;
  size_t pos = 0;
  while (pos + 1 < tokens.size()) {
    const size_t len = std::min<size_t>(window, tokens.size() - pos);
    t.reset();
    Value loss = window_loss(t, tokens, pos, len, state);
    nll += t.data(loss)[0] * static_cast<double>(len - 1);
    count += len - 1;
    pos += len - 1;  // the window's last token seeds the next window
  }
  return std::exp(nll / static_cast<double>(count));
}

}  // namespace rkm
