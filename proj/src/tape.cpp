#include "rkm/tape.hpp"

#include <algorithm>
#include <cmath>

#include "rkm/param.hpp"

namespace rkm {

int Tape::push(Op op, int r, int c, int p0, int p1, int p2) {
  Node n;
  n.op = op;
  n.rows = r;
  n.cols = c;
  n.len = r * c;
  n.off = static_cast<int64_t>(vals_.size());
  n.p0 = p0;
  n.p1 = p1;
  n.p2 = p2;
  vals_.resize(vals_.size() + n.len, 0.0);
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::leaf(std::span<const double> data, int rows, int cols) {
  if (static_cast<int>(data.size()) != rows * cols)
    throw ShapeError("leaf: got " + std::to_string(data.size()) +
                     " values for shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  int i = push(Op::kLeaf, rows, cols);
  std::copy(data.begin(), data.end(), vals(i).begin());
  return {i};
}

Value Tape::zeros(int rows, int cols) {
  return {push(Op::kLeaf, rows, cols)};
}

Value Tape::use(Parameter& p) {
  auto it = param_cache_.find(&p);
  if (it != param_cache_.end()) return {it->second};
  Value v = leaf(p.value, p.rows, p.cols);
  bindings_.emplace_back(v.i, &p);
  param_cache_.emplace(&p, v.i);
  return v;
}

void Tape::check_same_shape(const char* op, Value a, Value b) const {
  const Node& na = node(a.i);
  const Node& nb = node(b.i);
  if (na.rows != nb.rows || na.cols != nb.cols)
    throw ShapeError(std::string(op) + ": operand shapes " +
                     std::to_string(na.rows) + "x" + std::to_string(na.cols) +
                     " and " + std::to_string(nb.rows) + "x" +
                     std::to_string(nb.cols) + " differ");
}

Value Tape::affine(Value w, Value x, std::optional<Value> b) {
  // Copy the shape fields out: push() grows nodes_, so references into it
  // must never be held across an op creation.
  const int p = node(w.i).rows, q = node(w.i).cols;
  const int xr = node(x.i).rows, xc = node(x.i).cols;
  if (xc != 1)
    throw ShapeError("affine: x must be a column vector, got " +
                     std::to_string(xr) + "x" + std::to_string(xc));
  if (q != xr)
    throw ShapeError("affine: W is " + std::to_string(p) + "x" +
                     std::to_string(q) + " but x has length " +
                     std::to_string(xr));
  if (b && node(b->i).len != p)
    throw ShapeError("affine: bias length " + std::to_string(node(b->i).len) +
                     " does not match output length " + std::to_string(p));
  int i = push(Op::kAffine, p, 1, w.i, x.i, b ? b->i : -1);
  auto out = vals(i);
  auto wv = vals(w.i);
  auto xv = vals(x.i);
  for (int r = 0; r < p; ++r) {
    const double* row = wv.data() + static_cast<size_t>(r) * q;
    double acc = 0.0;
    for (int c = 0; c < q; ++c) acc += row[c] * xv[c];
    out[r] = acc;
  }
  if (b) {
    auto bv = vals(b->i);
    for (int r = 0; r < p; ++r) out[r] += bv[r];
  }
  return {i};
}

Value Tape::elementwise_check(const char* op_name, Value a, Value b) {
  check_same_shape(op_name, a, b);
  (void)op_name;
  return a;
}

Value Tape::add(Value a, Value b) {
  check_same_shape("add", a, b);
  int i = push(Op::kAdd, node(a.i).rows, node(a.i).cols, a.i, b.i);
  auto out = vals(i);
  auto av = vals(a.i);
  auto bv = vals(b.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = av[k] + bv[k];
  return {i};
}

Value Tape::hadamard(Value a, Value b) {
  check_same_shape("hadamard", a, b);
  int i = push(Op::kHadamard, node(a.i).rows, node(a.i).cols, a.i, b.i);
  auto out = vals(i);
  auto av = vals(a.i);
  auto bv = vals(b.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = av[k] * bv[k];
  return {i};
}

Value Tape::axpb(Value x, double a, double b) {
  int i = push(Op::kAxpb, node(x.i).rows, node(x.i).cols, x.i);
  nodes_[i].a = a;
  nodes_[i].b = b;
  auto out = vals(i);
  auto xv = vals(x.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = a * xv[k] + b;
  return {i};
}

Value Tape::scale_by(Value s, Value x) {
  if (node(s.i).len != 1)
    throw ShapeError("scale_by: scale operand must be scalar, got length " +
                     std::to_string(node(s.i).len));
  int i = push(Op::kScaleBy, node(x.i).rows, node(x.i).cols, s.i, x.i);
  auto out = vals(i);
  auto xv = vals(x.i);
  const double sv = vals(s.i)[0];
  for (int k = 0; k < node(i).len; ++k) out[k] = sv * xv[k];
  return {i};
}

Value Tape::sigmoid(Value x) {
  int i = push(Op::kSigmoid, node(x.i).rows, node(x.i).cols, x.i);
  auto out = vals(i);
  auto xv = vals(x.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = 1.0 / (1.0 + std::exp(-xv[k]));
  return {i};
}

Value Tape::tanh_(Value x) {
  int i = push(Op::kTanh, node(x.i).rows, node(x.i).cols, x.i);
  auto out = vals(i);
  auto xv = vals(x.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = std::tanh(xv[k]);
  return {i};
}

Value Tape::cos_(Value x) {
  int i = push(Op::kCos, node(x.i).rows, node(x.i).cols, x.i);
  auto out = vals(i);
  auto xv = vals(x.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = std::cos(xv[k]);
  return {i};
}

Value Tape::exp_(Value x) {
  int i = push(Op::kExp, node(x.i).rows, node(x.i).cols, x.i);
  auto out = vals(i);
  auto xv = vals(x.i);
  for (int k = 0; k < node(i).len; ++k) out[k] = std::exp(xv[k]);
  return {i};
}

Value Tape::repeat_each(Value x, int times) {
  if (node(x.i).cols != 1)
    throw ShapeError("repeat_each: input must be a vector");
  int k = node(x.i).rows;
  int i = push(Op::kRepeatEach, k, times, x.i);
  nodes_[i].tag = times;
  auto out = vals(i);
  auto xv = vals(x.i);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < times; ++c) out[static_cast<size_t>(r) * times + c] = xv[r];
  return {i};
}

Value Tape::row(Value m, int r) {
  const int mrows = node(m.i).rows, mcols = node(m.i).cols;
  if (r < 0 || r >= mrows)
    throw ShapeError("row: index " + std::to_string(r) + " out of range for " +
                     std::to_string(mrows) + "x" + std::to_string(mcols));
  int i = push(Op::kRow, mcols, 1, m.i);
  nodes_[i].tag = r;
  auto out = vals(i);
  auto mv = vals(m.i);
  for (int c = 0; c < mcols; ++c) out[c] = mv[static_cast<size_t>(r) * mcols + c];
  return {i};
}

Value Tape::mean_pool(std::span<const Value> xs) {
  if (xs.empty()) throw ShapeError("mean_pool: empty sequence");
  for (size_t k = 1; k < xs.size(); ++k) check_same_shape("mean_pool", xs[0], xs[k]);
  int i = push(Op::kMeanPool, node(xs[0].i).rows, node(xs[0].i).cols);
  nodes_[i].plist_off = static_cast<int>(plist_.size());
  nodes_[i].plist_len = static_cast<int>(xs.size());
  nodes_[i].a = 1.0 / static_cast<double>(xs.size());
  for (Value v : xs) plist_.push_back(v.i);
  auto out = vals(i);
  const double inv = nodes_[i].a;
  for (Value v : xs) {
    auto xv = vals(v.i);
    for (int k = 0; k < node(i).len; ++k) out[k] += xv[k];
  }
  for (int k = 0; k < node(i).len; ++k) out[k] *= inv;
  return {i};
}

Value Tape::sum_all(Value x) {
  int i = push(Op::kSumAll, 1, 1, x.i);
  auto xv = vals(x.i);
  double acc = 0.0;
  for (double v : xv) acc += v;
  vals(i)[0] = acc;
  return {i};
}

Value Tape::layer_norm(Value v, Value gain, Value bias, double eps) {
  check_same_shape("layer_norm", v, gain);
  check_same_shape("layer_norm", v, bias);
  int i = push(Op::kLayerNorm, node(v.i).rows, node(v.i).cols, v.i, gain.i, bias.i);
  nodes_[i].b = eps;
  auto out = vals(i);
  auto xv = vals(v.i);
  auto gv = vals(gain.i);
  auto bv = vals(bias.i);
  const int d = node(i).len;
  double mu = 0.0;
  for (int k = 0; k < d; ++k) mu += xv[k];
  mu /= d;
  double var = 0.0;
  for (int k = 0; k < d; ++k) var += (xv[k] - mu) * (xv[k] - mu);
  var /= d;  // population variance
  const double inv_s = 1.0 / std::sqrt(var + eps);
  for (int k = 0; k < d; ++k) out[k] = (xv[k] - mu) * inv_s * gv[k] + bv[k];
  return {i};
}

Tape::XentResult Tape::softmax_xent(Value logits, int label) {
  const int vsize = node(logits.i).len;
  if (label < 0 || label >= vsize)
    throw std::out_of_range("softmax_xent: label " + std::to_string(label) +
                            " out of range for " + std::to_string(vsize) +
                            " classes");
  int i = push(Op::kSoftmaxXent, 1, 1, logits.i);
  nodes_[i].tag = label;
  auto xv = vals(logits.i);
  double mx = xv[0];
  for (double v : xv) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : xv) z += std::exp(v - mx);
  const double logz = std::log(z);
  vals(i)[0] = logz - (xv[label] - mx);
  Vec probs(vsize);
  for (int k = 0; k < vsize; ++k) probs[k] = std::exp(xv[k] - mx) / z;
  return {{i}, std::move(probs)};
}

void Tape::backward(Value loss) {
  if (!loss.valid() || loss.i >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("backward: invalid loss node");
  if (node(loss.i).len != 1)
    throw ShapeError("backward: loss must be scalar, got length " +
                     std::to_string(node(loss.i).len));
  grads_.assign(vals_.size(), 0.0);
  grads_[node(loss.i).off] = 1.0;
  for (int i = loss.i; i >= 0; --i) backward_node(i);
  for (auto& [idx, p] : bindings_) {
    auto g = grads(idx);
    for (size_t k = 0; k < g.size(); ++k) p->grad[k] += g[k];
  }
}

void Tape::backward_node(int i) {
  const Node& n = nodes_[i];
  auto gy = grads(i);
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAffine: {
      auto gw = grads(n.p0);
      auto gx = grads(n.p1);
      auto wv = vals(n.p0);
      auto xv = vals(n.p1);
      const int p = nodes_[n.p0].rows, q = nodes_[n.p0].cols;
      for (int r = 0; r < p; ++r) {
        const double g = gy[r];
        if (g == 0.0) continue;
        double* gwrow = gw.data() + static_cast<size_t>(r) * q;
        const double* wrow = wv.data() + static_cast<size_t>(r) * q;
        for (int c = 0; c < q; ++c) {
          gwrow[c] += g * xv[c];
          gx[c] += g * wrow[c];
        }
      }
      if (n.p2 >= 0) {
        auto gb = grads(n.p2);
        for (int r = 0; r < p; ++r) gb[r] += gy[r];
      }
      break;
    }
    case Op::kAdd: {
      auto ga = grads(n.p0);
      auto gb = grads(n.p1);
      for (int k = 0; k < n.len; ++k) {
        ga[k] += gy[k];
        gb[k] += gy[k];
      }
      break;
    }
    case Op::kHadamard: {
      auto ga = grads(n.p0);
      auto gb = grads(n.p1);
      auto av = vals(n.p0);
      auto bv = vals(n.p1);
      for (int k = 0; k < n.len; ++k) {
        ga[k] += gy[k] * bv[k];
        gb[k] += gy[k] * av[k];
      }
      break;
    }
    case Op::kAxpb: {
      auto gx = grads(n.p0);
      for (int k = 0; k < n.len; ++k) gx[k] += n.a * gy[k];
      break;
    }
    case Op::kScaleBy: {
      auto gs = grads(n.p0);
      auto gx = grads(n.p1);
      auto xv = vals(n.p1);
      const double sv = vals(n.p0)[0];
      double acc = 0.0;
      for (int k = 0; k < n.len; ++k) {
        acc += gy[k] * xv[k];
        gx[k] += sv * gy[k];
      }
      gs[0] += acc;
      break;
    }
    case Op::kSigmoid: {
      auto gx = grads(n.p0);
      auto yv = vals(i);
      for (int k = 0; k < n.len; ++k) gx[k] += gy[k] * yv[k] * (1.0 - yv[k]);
      break;
    }
    case Op::kTanh: {
      auto gx = grads(n.p0);
      auto yv = vals(i);
      for (int k = 0; k < n.len; ++k) gx[k] += gy[k] * (1.0 - yv[k] * yv[k]);
      break;
    }
    case Op::kCos: {
      auto gx = grads(n.p0);
      auto xv = vals(n.p0);
      for (int k = 0; k < n.len; ++k) gx[k] -= gy[k] * std::sin(xv[k]);
      break;
    }
    case Op::kExp: {
      auto gx = grads(n.p0);
      auto yv = vals(i);
      for (int k = 0; k < n.len; ++k) gx[k] += gy[k] * yv[k];
      break;
    }
    case Op::kRepeatEach: {
      auto gx = grads(n.p0);
      const int times = n.tag;
      for (int r = 0; r < n.rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < times; ++c) acc += gy[static_cast<size_t>(r) * times + c];
        gx[r] += acc;
      }
      break;
    }
    case Op::kRow: {
      auto gm = grads(n.p0);
      const int r = n.tag;
      const int mcols = nodes_[n.p0].cols;
      for (int c = 0; c < mcols; ++c) gm[static_cast<size_t>(r) * mcols + c] += gy[c];
      break;
    }
    case Op::kMeanPool: {
      const double inv = n.a;
      for (int t = 0; t < n.plist_len; ++t) {
        auto gp = grads(plist_[n.plist_off + t]);
        for (int k = 0; k < n.len; ++k) gp[k] += gy[k] * inv;
      }
      break;
    }
    case Op::kSumAll: {
      auto gx = grads(n.p0);
      const double g = gy[0];
      for (size_t k = 0; k < gx.size(); ++k) gx[k] += g;
      break;
    }
    case Op::kLayerNorm: {
      auto gx = grads(n.p0);
      auto gg = grads(n.p1);
      auto gb = grads(n.p2);
      auto xv = vals(n.p0);
      auto gv = vals(n.p1);
      const int d = n.len;
      double mu = 0.0;
      for (int k = 0; k < d; ++k) mu += xv[k];
      mu /= d;
      double var = 0.0;
      for (int k = 0; k < d; ++k) var += (xv[k] - mu) * (xv[k] - mu);
      var /= d;
      const double inv_s = 1.0 / std::sqrt(var + n.b);
      // ghat = dL/dxhat; dL/dx = inv_s * (ghat - mean(ghat) - xhat*mean(ghat*xhat))
      double mean_gh = 0.0, mean_ghx = 0.0;
      for (int k = 0; k < d; ++k) {
        const double xhat = (xv[k] - mu) * inv_s;
        const double gh = gy[k] * gv[k];
        mean_gh += gh;
        mean_ghx += gh * xhat;
        gg[k] += gy[k] * xhat;
        gb[k] += gy[k];
      }
      mean_gh /= d;
      mean_ghx /= d;
      for (int k = 0; k < d; ++k) {
        const double xhat = (xv[k] - mu) * inv_s;
        gx[k] += inv_s * (gy[k] * gv[k] - mean_gh - xhat * mean_ghx);
      }
      break;
    }
    case Op::kSoftmaxXent: {
      auto gx = grads(n.p0);
      auto xv = vals(n.p0);
      const double g = gy[0];
      if (g == 0.0) break;
      double mx = xv[0];
      for (double v : xv) mx = std::max(mx, v);
      double z = 0.0;
      for (double v : xv) z += std::exp(v - mx);
      for (size_t k = 0; k < gx.size(); ++k) {
        double p = std::exp(xv[k] - mx) / z;
        gx[k] += g * (p - (static_cast<int>(k) == n.tag ? 1.0 : 0.0));
      }
      break;
    }
  }
}

std::span<const double> Tape::data(Value v) const { return vals(v.i); }
std::span<double> Tape::mutable_data(Value v) { return vals(v.i); }

std::span<const double> Tape::grad(Value v) const {
  return {grads_.data() + node(v.i).off, (size_t)node(v.i).len};
}

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  plist_.clear();
  bindings_.clear();
  param_cache_.clear();
}

}  // namespace rkm
