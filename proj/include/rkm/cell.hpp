#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rkm/ngram.hpp"
#include "rkm/param.hpp"
#include "rkm/tape.hpp"
#include "rkm/wavelet.hpp"

namespace rkm {

// The seven cell variants, strongest to weakest:
//   Lstm               c = eta (.) tanh(ctilde) + f (.) c_prev, ctilde a
//                      tanh affine with bias, h' = o (.) tanh(c)
//   RkmLstm            c = eta (.) ctilde + f (.) c_prev, ctilde linear,
//                      h' = o (.) c
//   RkmCifg            as RkmLstm with eta tied to 1 - f
//   LinearKernelOutGate c = si2*ctilde + sf2*c_prev, h' = o (.) c
//   LinearKernel       same memory, h' = tanh(c)
//   GatedCnn           feedforward: c = si2*ctilde, h' = eta (.) c
//   Cnn                feedforward: c = si2*ctilde, h' = tanh(c)
enum class CellVariant {
  kLstm,
  kRkmLstm,
  kRkmCifg,
  kLinearKernelOutGate,
  kLinearKernel,
  kGatedCnn,
  kCnn,
};

inline constexpr CellVariant kAllVariants[] = {
    CellVariant::kLstm,
    CellVariant::kRkmLstm,
    CellVariant::kRkmCifg,
    CellVariant::kLinearKernelOutGate,
    CellVariant::kLinearKernel,
    CellVariant::kGatedCnn,
    CellVariant::kCnn,
};

const char* variant_name(CellVariant v);              // CLI spelling
std::optional<CellVariant> parse_variant(std::string_view s);
std::string variant_list();                           // for error messages

// True for variants whose hidden output feeds back into the next step.
bool variant_recurrent(CellVariant v);
// True for variants whose memory gains are the static sigma constants
// (as opposed to learned sigmoid gates).
bool variant_static_gains(CellVariant v);

struct CellConfig {
  CellVariant variant = CellVariant::kRkmLstm;
  int m = 0;          // input channel count
  int d = 0;          // cell width (= hidden output width)
  int n = 1;          // window length
  int dilation = 1;
  double sigma_i_sq = 0.5;  // static input gain
  double sigma_f_sq = 0.5;  // static memory gain; must stay < 1
  bool use_layer_norm = false;
  bool use_wavelet = false;   // Morlet parameterization of the content bank
  bool learn_sigmas = false;  // promote the static gains to parameters
  uint64_t seed = 0;
  double ln_eps = 1e-5;

  // Throws std::invalid_argument on bad dimensions or gains. Feedforward
  // variants have their memory gain forced to zero here.
  void validate_and_normalize();
};

// One filter bank plus optional feedback matrix and bias: the parameter
// block behind a gate or the content path.
struct BankParams {
  std::vector<Parameter> x;       // n blocks, each [d x m]
  std::optional<Parameter> h;     // [d x d] feedback, recurrent variants only
  std::optional<Parameter> b;     // [d] bias
};

// Unified implementation of all variants. All variants run through the
// same arithmetic path (same op order), so configurations that should
// coincide do so exactly, not just approximately.
class Cell {
 public:
  explicit Cell(CellConfig cfg);
  Cell(const Cell&) = delete;
  Cell& operator=(const Cell&) = delete;

  const CellConfig& config() const { return cfg_; }

  // Deterministic fill: weights ~ U(-r, r) with r = sqrt(6/(fan_in+fan_out)),
  // biases zero except the forget-gate bias which starts at 1.
  void init_params(uint64_t seed);
  void init_params() { init_params(cfg_.seed); }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  Parameter* find(const std::string& name) { return params_.find(name); }

  // Weight scalars only — biases, normalization, and the static gains are
  // excluded from this accounting. Matches the closed formulas below.
  size_t weight_scalar_count() const;

  struct State {
    Value c, h;
  };
  State initial_state(Tape& t) const;

  // One step. lags[k] must be the input dilation*k steps back (callers pass
  // a shared zero vector for padded positions).
  State step(Tape& t, std::span<const Value> lags, const State& prev);

  // Whole sequence from inputs already on the tape; returns every h'_t.
  std::vector<Value> run_sequence(Tape& t, std::span<const Value> xs);
  // Convenience: sequence given as T rows of m reals, time-major.
  std::vector<Value> run_sequence(Tape& t, std::span<const double> seq, int T);

  BankParams& content() { return content_; }
  BankParams* gate_o() { return opt(o_); }
  BankParams* gate_eta() { return opt(eta_); }
  BankParams* gate_f() { return opt(f_); }
  WaveletBank* wavelet() { return wavelet_ ? &*wavelet_ : nullptr; }
  Parameter* ln_gain() { return opt(ln_gain_); }
  Parameter* ln_bias() { return opt(ln_bias_); }
  Parameter* sigma_i() { return opt(sigma_i_); }
  Parameter* sigma_f() { return opt(sigma_f_); }

 private:
  template <typename T>
  static T* opt(std::optional<T>& o) { return o ? &*o : nullptr; }

  Value bank_preact(Tape& t, BankParams& bank, std::span<const Value> lags,
                    Value h_prev);
  Value content_preact(Tape& t, std::span<const Value> lags, Value h_prev);
  void register_params();

  CellConfig cfg_;
  BankParams content_;                    // x empty when wavelet-parameterized
  std::optional<WaveletBank> wavelet_;
  std::optional<BankParams> o_, eta_, f_;
  std::optional<Parameter> ln_gain_, ln_bias_;
  std::optional<Parameter> sigma_i_, sigma_f_;  // allocated when learned
  ParamSet params_;
};

// Closed-form weight count for a variant: content (nm [+ d]) columns times
// d rows, plus the same again per gate the variant carries.
size_t param_count(CellVariant v, int m, int d, int n);

// Max relative error between backward() and central finite differences for
// a random-sequence scalar loss through a freshly initialized cell.
GradCheckResult grad_check_cell(const CellConfig& cfg, int seq_len,
                                uint64_t seed, double fd_eps = 1e-5);

}  // namespace rkm
