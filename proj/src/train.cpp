#include "rkm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace rkm {

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::vector<Vec> snapshot(const ParamSet& params) {
  std::vector<Vec> out;
  out.reserve(params.items().size());
  for (const Parameter* p : params.items()) out.push_back(p->value);
  return out;
}

void restore(ParamSet& params, const std::vector<Vec>& snap) {
  for (size_t i = 0; i < snap.size(); ++i) params.items()[i]->value = snap[i];
}

}  // namespace

void TrainConfig::validate() const {
  if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (clip_norm <= 0.0)
    throw std::invalid_argument("TrainConfig: clip_norm must be > 0");
  if (batch_size < 1 || epochs < 1)
    throw std::invalid_argument("TrainConfig: batch_size and epochs must be >= 1");
  if (tbptt < 2) throw std::invalid_argument("TrainConfig: tbptt must be >= 2");
  if (momentum < 0.0 || momentum >= 1.0 || beta1 < 0.0 || beta1 >= 1.0 ||
      beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("TrainConfig: momentum terms must lie in [0, 1)");
  if (eps <= 0.0) throw std::invalid_argument("TrainConfig: eps must be > 0");
}

void TrainReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "epoch,train_loss,val_metric,seconds\n";
  for (const EpochRow& r : rows)
    out << r.epoch << ',' << r.train_loss << ',' << r.val_metric << ','
        << r.seconds << '\n';
}

double clip_gradients(ParamSet& params, double clip_norm) {
  const double norm = params.grad_global_norm();
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (Parameter* p : params.items())
      for (double& g : p->grad) g *= scale;
  }
  return norm;
}

Optimizer::Optimizer(const TrainConfig& cfg, const ParamSet& params)
    : kind_(cfg.optimizer),
      lr_(cfg.lr),
      momentum_(cfg.momentum),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.eps),
      clip_(cfg.clip_norm) {
  m1_.reserve(params.items().size());
  for (const Parameter* p : params.items()) m1_.emplace_back(p->size(), 0.0);
  if (kind_ == OptKind::kAdam) {
    m2_.reserve(params.items().size());
    for (const Parameter* p : params.items()) m2_.emplace_back(p->size(), 0.0);
  }
}

void Optimizer::step(ParamSet& params) {
  if (m1_.size() != params.items().size())
    throw std::logic_error("Optimizer: parameter set changed size");
  clip_gradients(params, clip_);
  ++steps_;
  if (kind_ == OptKind::kSgdMomentum) {
    for (size_t i = 0; i < m1_.size(); ++i) {
      Parameter& p = *params.items()[i];
      if (!p.trainable) continue;
      for (size_t k = 0; k < p.size(); ++k) {
        m1_[i][k] = momentum_ * m1_[i][k] + p.grad[k];
        p.value[k] -= lr_ * m1_[i][k];
      }
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (size_t i = 0; i < m1_.size(); ++i) {
    Parameter& p = *params.items()[i];
    if (!p.trainable) continue;
    for (size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m1_[i][k] = beta1_ * m1_[i][k] + (1.0 - beta1_) * g;
      m2_[i][k] = beta2_ * m2_[i][k] + (1.0 - beta2_) * g * g;
      const double mhat = m1_[i][k] / bc1;
      const double vhat = m2_[i][k] / bc2;
      p.value[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double accuracy(Classifier& model, const SequenceDataset& ds) {
  if (ds.items.empty()) throw std::invalid_argument("accuracy: empty dataset");
  size_t correct = 0;
  for (const Item& it : ds.items) {
    const Vec probs = ds.token_mode()
                          ? model.classify(it.tokens)
                          : model.classify(it.feats.v, it.feats.rows);
    const int pred = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (pred == it.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.items.size());
}

namespace {

Value item_loss(Tape& t, Classifier& model, const SequenceDataset& ds,
                const Item& it) {
  Value lg = ds.token_mode() ? model.logits(t, it.tokens)
                             : model.logits(t, it.feats.v, it.feats.rows);
  return t.softmax_xent(lg, it.label).loss;
}

}  // namespace

double batch_loss_value(Classifier& model, const SequenceDataset& ds,
                        std::span<const size_t> idx) {
  Tape t;
  std::vector<Value> losses;
  losses.reserve(idx.size());
  for (size_t i : idx) losses.push_back(item_loss(t, model, ds, ds.items[i]));
  return t.data(t.mean_pool(losses))[0];
}

TrainReport train_classifier(Classifier& model, const SequenceDataset& train,
                             const SequenceDataset& val,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (train.items.empty() || val.items.empty())
    throw std::invalid_argument("train_classifier: empty dataset");
  Optimizer opt(cfg, model.params());
  TrainReport report;
  std::vector<Vec> best;
  int stale = 0;
  Tape tape;

  std::vector<size_t> order(train.items.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    Rng shuffle_rng(cfg.seed + static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const size_t bs =
          std::min<size_t>(cfg.batch_size, order.size() - at);
      tape.reset();
      std::vector<Value> losses;
      losses.reserve(bs);
      for (size_t b = 0; b < bs; ++b)
        losses.push_back(
            item_loss(tape, model, train, train.items[order[at + b]]));
      Value loss = tape.mean_pool(losses);
      const double lv = tape.data(loss)[0];
      if (!std::isfinite(lv))
        throw std::runtime_error(
            "train_classifier: non-finite loss at epoch " +
            std::to_string(epoch) + ", batch " + std::to_string(at / cfg.batch_size));
      model.params().zero_grads();
      tape.backward(loss);
      opt.step(model.params());
      loss_sum += lv * static_cast<double>(bs);
      seen += bs;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.val_metric = accuracy(model, val);
    row.seconds = now_seconds() - t0;
    report.rows.push_back(row);

    if (report.best_epoch < 0 || row.val_metric > report.best_val) {
      report.best_epoch = epoch;
      report.best_val = row.val_metric;
      best = snapshot(model.params());
      stale = 0;
    } else {
      ++stale;
    }
    if (cfg.target_metric >= 0.0 && row.val_metric >= cfg.target_metric) break;
    if (cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (!best.empty()) restore(model.params(), best);
  return report;
}

TrainReport train_lm(LanguageModel& model, std::span<const int> train_tokens,
                     std::span<const int> val_tokens, const TrainConfig& cfg) {
  cfg.validate();
  const size_t streams = static_cast<size_t>(cfg.batch_size);
  if (train_tokens.size() < streams * 2 + 1)
    throw std::invalid_argument("train_lm: training stream too short");
  if (val_tokens.size() < 2)
    throw std::invalid_argument("train_lm: validation stream too short");

  Optimizer opt(cfg, model.params());
  TrainReport report;
  std::vector<Vec> best;
  int stale = 0;
  Tape tape;

  // batch_size parallel streams over contiguous chunks of the corpus
  const size_t chunk = train_tokens.size() / streams;
  const size_t steps_per_epoch = (chunk - 1 + cfg.tbptt - 1) / cfg.tbptt;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    std::vector<LanguageModel::StreamState> states(streams);
    double loss_sum = 0.0;
    size_t batches = 0;

    for (size_t step = 0; step < steps_per_epoch; ++step) {
      const size_t offset = step * cfg.tbptt;
      if (offset + 1 >= chunk) break;
      const size_t len = std::min<size_t>(cfg.tbptt + 1, chunk - offset);
      if (len < 2) break;
      tape.reset();
      std::vector<Value> losses;
      losses.reserve(streams);
      for (size_t s = 0; s < streams; ++s)
        losses.push_back(model.window_loss(
            tape, train_tokens.subspan(s * chunk, chunk), offset, len,
            states[s]));
      Value loss = tape.mean_pool(losses);
      const double lv = tape.data(loss)[0];
      if (!std::isfinite(lv))
        throw std::runtime_error("train_lm: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", window " +
                                 std::to_string(step));
      model.params().zero_grads();
      tape.backward(loss);
      opt.step(model.params());
      loss_sum += lv;
      ++batches;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches);
    row.val_metric = model.perplexity(val_tokens);
    row.seconds = now_seconds() - t0;
    report.rows.push_back(row);

    const bool better =
        report.best_epoch < 0 || row.val_metric < report.best_val;
    if (better) {
      report.best_epoch = epoch;
      report.best_val = row.val_metric;
      best = snapshot(model.params());
      stale = 0;
    } else {
      ++stale;
    }
    if (cfg.target_metric >= 0.0 && row.val_metric <= cfg.target_metric) break;
    if (cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (!best.empty()) restore(model.params(), best);
  return report;
}

}  // namespace rkm
