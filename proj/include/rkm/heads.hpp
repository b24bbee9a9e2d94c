#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rkm/cell.hpp"

namespace rkm {

// Numerically stable softmax of a plain vector (max-shifted).
Vec softmax(std::span<const double> logits);

// Sequence classifier: [embedding ->] cell -> mean pool over h' ->
// fc1 + tanh -> fc2 -> logits. vocab = 0 selects raw-feature mode, where
// inputs are T rows of m reals instead of token ids.
class Classifier {
 public:
  struct Config {
    CellConfig cell;
    int vocab = 0;      // 0 = raw-feature mode
    int n_classes = 2;
  };

  explicit Classifier(Config cfg);
  Classifier(const Classifier&) = delete;
  Classifier& operator=(const Classifier&) = delete;

  const Config& config() const { return cfg_; }
  Cell& cell() { return cell_; }
  ParamSet& params() { return params_; }

  void init_params(uint64_t seed);

  Value logits(Tape& t, std::span<const int> tokens);
  Value logits(Tape& t, std::span<const double> feats, int T);

  // Class probabilities on a scratch tape; no gradients involved.
  Vec classify(std::span<const int> tokens);
  Vec classify(std::span<const double> feats, int T);

  Parameter* embedding() { return emb_ ? &*emb_ : nullptr; }
  Parameter& fc1_w() { return fc1_w_; }
  Parameter& fc1_b() { return fc1_b_; }
  Parameter& fc2_w() { return fc2_w_; }
  Parameter& fc2_b() { return fc2_b_; }

 private:
  Value head(Tape& t, const std::vector<Value>& hs);
  std::vector<Value> embed(Tape& t, std::span<const int> tokens);

  Config cfg_;
  Cell cell_;
  std::optional<Parameter> emb_;  // [vocab x m]
  Parameter fc1_w_, fc1_b_;       // [d x d], [d]
  Parameter fc2_w_, fc2_b_;       // [V x d], [V]
  ParamSet params_;
};

// Character/word language model: embedding -> cell -> y_t = A h'_t + beta.
// The cell's hidden output is already the factor-score space, so A is the
// single output matrix; it requires d <= vocab.
class LanguageModel {
 public:
  struct Config {
    CellConfig cell;
    int vocab = 0;
  };

  explicit LanguageModel(Config cfg);
  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;

  const Config& config() const { return cfg_; }
  Cell& cell() { return cell_; }
  ParamSet& params() { return params_; }

  void init_params(uint64_t seed);

  // Carried state between truncated windows; plain numbers, so gradients
  // never cross a window boundary.
  struct StreamState {
    Vec c, h;
    bool started = false;
  };

  // Mean teacher-forced cross-entropy over one window: each position i in
  // [start, start+len-1) consumes tokens[i] and predicts tokens[i+1].
  // Convolutional lags may reach before `start` into the same stream, so
  // n-gram cells work across window boundaries. `state` must be the carry
  // from the window ending at `start` (or fresh for start == 0); it is
  // updated to the post-window cell state. Needs len >= 2.
  Value window_loss(Tape& t, std::span<const int> tokens, size_t start,
                    size_t len, StreamState& state);

  // Next-token distribution after consuming the whole history (fresh state).
  Vec predict_next(std::span<const int> history);

  // exp(mean over positions of -log p(w_{t+1} | w_{<=t})), teacher-forced,
  // evaluated in bounded windows with carried state.
  double perplexity(std::span<const int> tokens, int window = 256);

  Parameter& embedding() { return emb_; }
  Parameter& out_w() { return out_w_; }
  Parameter& out_b() { return out_b_; }

 private:
  Cell::State seed_state(Tape& t, const StreamState& s);

  Config cfg_;
  Cell cell_;
  Parameter emb_;    // [vocab x m]
  Parameter out_w_;  // [vocab x d]
  Parameter out_b_;  // [vocab]
  ParamSet params_;
};

}  // namespace rkm
