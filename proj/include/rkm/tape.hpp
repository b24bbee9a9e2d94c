#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "rkm/common.hpp"

namespace rkm {

struct Parameter;

// Handle to one node in a Tape. Plain index; cheap to copy.
struct Value {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode computation record over dense 64-bit real arrays.
//
// Nodes are appended in evaluation order, so reverse index order is a
// topological order for the backward sweep. Storage for node outputs and
// gradients lives in pooled buffers that survive reset(), keeping
// per-batch allocation cost near zero.
class Tape {
 public:
  Value leaf(std::span<const double> data, int rows, int cols = 1);
  Value zeros(int rows, int cols = 1);
  // Leaf bound to a Parameter: backward() accumulates into p.grad.
  // Cached per tape, so a parameter used twice shares one node and its
  // gradient contributions add.
  Value use(Parameter& p);

  // y = W x (+ b). W is rows x cols, x a column vector.
  Value affine(Value w, Value x, std::optional<Value> b = std::nullopt);
  Value add(Value a, Value b);
  Value hadamard(Value a, Value b);
  // y = a*x + b elementwise, a and b plain constants.
  Value axpb(Value x, double a, double b = 0.0);
  // y = s * x where s is a scalar-valued node.
  Value scale_by(Value s, Value x);
  Value sigmoid(Value x);
  Value tanh_(Value x);
  Value cos_(Value x);
  Value exp_(Value x);
  // Vector of length k -> (k x times) matrix repeating each entry.
  Value repeat_each(Value x, int times);
  // Row r of a matrix-shaped node (embedding lookup).
  Value row(Value m, int r);
  Value mean_pool(std::span<const Value> xs);
  Value sum_all(Value x);
  Value layer_norm(Value v, Value gain, Value bias, double eps);

  struct XentResult {
    Value loss;        // scalar
    Vec probs;         // softmax probabilities, sum to 1
  };
  // Numerically stable softmax cross-entropy against a class index.
  XentResult softmax_xent(Value logits, int label);

  // Reverse accumulation from a scalar loss; accumulates bound
  // parameters' gradients into Parameter::grad.
  void backward(Value loss);

  void reset();

  std::span<const double> data(Value v) const;
  std::span<double> mutable_data(Value v);
  std::span<const double> grad(Value v) const;
  int rows(Value v) const { return node(v.i).rows; }
  int cols(Value v) const { return node(v.i).cols; }
  int size(Value v) const { return node(v.i).len; }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kLeaf,
    kAffine,
    kAdd,
    kHadamard,
    kAxpb,
    kScaleBy,
    kSigmoid,
    kTanh,
    kCos,
    kExp,
    kRepeatEach,
    kRow,
    kMeanPool,
    kSumAll,
    kLayerNorm,
    kSoftmaxXent,
  };

  struct Node {
    Op op = Op::kLeaf;
    int rows = 0, cols = 1;
    int len = 0;
    int64_t off = 0;       // offset into vals_/grads_
    int p0 = -1, p1 = -1, p2 = -1;
    int plist_off = 0, plist_len = 0;
    double a = 0.0, b = 0.0;  // op payload (axpb constants, layer-norm eps)
    int tag = 0;              // op payload (label / row / repeat count)
  };

  const Node& node(int i) const { return nodes_[i]; }
  int push(Op op, int r, int c, int p0 = -1, int p1 = -1, int p2 = -1);
  std::span<double> vals(int i) { return {vals_.data() + nodes_[i].off, (size_t)nodes_[i].len}; }
  std::span<const double> vals(int i) const { return {vals_.data() + nodes_[i].off, (size_t)nodes_[i].len}; }
  std::span<double> grads(int i) { return {grads_.data() + nodes_[i].off, (size_t)nodes_[i].len}; }
  void backward_node(int i);
  void check_same_shape(const char* op, Value a, Value b) const;
  Value elementwise_check(const char* op, Value a, Value b);

  std::vector<Node> nodes_;
  std::vector<double> vals_, grads_;
  std::vector<int> plist_;
  std::vector<std::pair<int, Parameter*>> bindings_;
  std::unordered_map<const Parameter*, int> param_cache_;
};

}  // namespace rkm
