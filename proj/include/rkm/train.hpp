#pragma once

#include <string>
#include <vector>

#include "rkm/data.hpp"
#include "rkm/heads.hpp"

namespace rkm {

enum class OptKind { kSgdMomentum, kAdam };

struct TrainConfig {
  OptKind optimizer = OptKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;                              // sgd-momentum
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;      // adaptive-moment
  double clip_norm = 5.0;
  int batch_size = 32;
  int epochs = 10;
  int patience = 0;        // early stop after this many non-improving epochs; 0 = off
  int tbptt = 35;          // language-model truncation window
  double target_metric = -1.0;  // stop once the validation metric is at
                                // least (accuracy) / at most (perplexity)
                                // this good; < 0 = off
  uint64_t seed = 0;

  void validate() const;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  int best_epoch = -1;
  double best_val = 0.0;
  std::string best_checkpoint;  // filled by callers that write one

  // "epoch,train_loss,val_metric,seconds" with a header line.
  void write_csv(const std::string& path) const;
};

// First-order update over a ParamSet: global-norm gradient clipping, then
// sgd-momentum or bias-corrected adaptive moments.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ParamSet& params);
  // Clips grads in place, applies one update to trainable parameters,
  // leaves grads as clipped.
  void step(ParamSet& params);
  int64_t steps_taken() const { return steps_; }

 private:
  OptKind kind_;
  double lr_, momentum_, beta1_, beta2_, eps_, clip_;
  std::vector<Vec> m1_, m2_;  // per-parameter moment buffers
  int64_t steps_ = 0;
};

// Scales all gradients by clip/norm when the global norm exceeds clip.
// Returns the pre-clip norm.
double clip_gradients(ParamSet& params, double clip_norm);

// Mean cross-entropy over the items of one batch.
double batch_loss_value(Classifier& model, const SequenceDataset& ds,
                        std::span<const size_t> idx);

// Full training loops. Deterministic given cfg.seed (wall-clock column
// aside); the best-validation parameters are restored before returning.
TrainReport train_classifier(Classifier& model, const SequenceDataset& train,
                             const SequenceDataset& val, const TrainConfig& cfg);
TrainReport train_lm(LanguageModel& model, std::span<const int> train_tokens,
                     std::span<const int> val_tokens, const TrainConfig& cfg);

// Evaluation metrics; models are not mutated.
double accuracy(Classifier& model, const SequenceDataset& ds);

}  // namespace rkm
