#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "rkm/param.hpp"
#include "rkm/tape.hpp"

using namespace rkm;

namespace {

// Builds the graph once for the analytic gradients, then hands the same
// builder to the finite-difference comparator, which re-evaluates it at
// perturbed parameter values.
double fd_error(ParamSet& set, const std::function<Value(Tape&)>& graph) {
  Tape t;
  t.backward(graph(t));
  const auto f = [&]() {
    Tape s;
    return s.data(graph(s))[0];
  };
  return compare_grads(f, set).max_rel_err;
}

Parameter make_param(const std::string& name, std::vector<double> v, int rows,
                     int cols = 1) {
  Parameter p(name, rows, cols);
  p.value = std::move(v);
  return p;
}

}  // namespace

TEST_SUITE("tape") {
  TEST_CASE("hand-worked affine-sigmoid chain") {
    Parameter w = make_param("w", {0.3, 0.7}, 1, 2);
    Parameter b = make_param("b", {0.2}, 1);
    const Vec x = {0.5, -1.0};

    Tape t;
    const Value y = t.sigmoid(t.affine(t.use(w), t.leaf(x, 2), t.use(b)));
    const double pre = 0.3 * 0.5 + 0.7 * -1.0 + 0.2;
    const double sig = 1.0 / (1.0 + std::exp(-pre));
    CHECK(t.data(y)[0] == doctest::Approx(sig).epsilon(1e-15));

    t.backward(y);
    const double dsig = sig * (1.0 - sig);
    CHECK(w.grad[0] == doctest::Approx(dsig * x[0]).epsilon(1e-12));
    CHECK(w.grad[1] == doctest::Approx(dsig * x[1]).epsilon(1e-12));
    CHECK(b.grad[0] == doctest::Approx(dsig).epsilon(1e-12));
  }

  TEST_CASE("every differentiable op matches central differences") {
    Parameter x = make_param("x", {0.4, -0.9, 0.15}, 3);
    Parameter y = make_param("y", {-0.2, 0.6, 1.1}, 3);
    Parameter w = make_param("w", {0.1, -0.5, 0.8, 0.3, 0.9, -0.7}, 2, 3);
    Parameter b2 = make_param("b2", {0.05, -0.3}, 2);
    Parameter s = make_param("s", {1.3}, 1);
    Parameter emb = make_param("emb", {1, 2, 3, 4, 5, 6, 7, 8}, 4, 2);
    Parameter gain = make_param("gain", {1.1, 0.9, 1.05}, 3);
    Parameter bias = make_param("bias", {0.0, 0.2, -0.1}, 3);
    Parameter logits = make_param("logits", {1.2, -0.7, 0.3, 0.9, -1.4}, 5);

    struct OpCase {
      const char* name;
      std::vector<Parameter*> params;
      std::function<Value(Tape&)> graph;
    };
    const OpCase cases[] = {
        {"affine", {&w, &x, &b2},
         [&](Tape& t) {
           return t.sum_all(t.affine(t.use(w), t.use(x), t.use(b2)));
         }},
        {"add+hadamard", {&x, &y},
         [&](Tape& t) {
           return t.sum_all(t.hadamard(t.add(t.use(x), t.use(y)), t.use(y)));
         }},
        {"axpb", {&x},
         [&](Tape& t) { return t.sum_all(t.axpb(t.use(x), 1.7, -0.3)); }},
        {"scale_by", {&s, &x},
         [&](Tape& t) { return t.sum_all(t.scale_by(t.use(s), t.use(x))); }},
        {"sigmoid", {&x},
         [&](Tape& t) { return t.sum_all(t.sigmoid(t.use(x))); }},
        {"tanh", {&x}, [&](Tape& t) { return t.sum_all(t.tanh_(t.use(x))); }},
        {"cos", {&x}, [&](Tape& t) { return t.sum_all(t.cos_(t.use(x))); }},
        {"exp", {&x}, [&](Tape& t) { return t.sum_all(t.exp_(t.use(x))); }},
        {"repeat_each", {&x},
         [&](Tape& t) {
           // Weighted sum so each repeated copy carries a distinct
           // coefficient; a plain sum would hide transposition bugs.
           const Vec coef = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
           return t.sum_all(
               t.hadamard(t.repeat_each(t.use(x), 4), t.leaf(coef, 3, 4)));
         }},
        {"row", {&emb},
         [&](Tape& t) {
           return t.sum_all(t.hadamard(t.row(t.use(emb), 2),
                                       t.leaf(Vec{0.5, -2.0}, 2)));
         }},
        {"mean_pool", {&x, &y},
         [&](Tape& t) {
           const Value xs[] = {t.use(x), t.use(y), t.tanh_(t.use(x))};
           return t.sum_all(t.mean_pool(xs));
         }},
        {"layer_norm", {&x, &gain, &bias},
         [&](Tape& t) {
           const Vec coef = {1.0, -2.0, 0.5};
           return t.sum_all(t.hadamard(
               t.layer_norm(t.use(x), t.use(gain), t.use(bias), 1e-5),
               t.leaf(coef, 3)));
         }},
        {"softmax_xent", {&logits},
         [&](Tape& t) { return t.softmax_xent(t.use(logits), 3).loss; }},
    };

    for (const OpCase& c : cases) {
      CAPTURE(c.name);
      ParamSet set;
      for (Parameter* p : c.params) {
        p->zero_grad();
        set.add(*p);
      }
      CHECK(fd_error(set, c.graph) < 1e-5);
    }
  }

  TEST_CASE("a parameter used twice accumulates both contributions") {
    Parameter x = make_param("x", {0.3, -1.2, 2.0}, 3);
    Tape t;
    // loss = sum(x + x*x)  =>  dloss/dx = 1 + 2x.
    const Value vx = t.use(x);
    t.backward(t.sum_all(t.add(vx, t.hadamard(t.use(x), vx))));
    for (int i = 0; i < 3; ++i)
      CHECK(x.grad[i] == doctest::Approx(1.0 + 2.0 * x.value[i]).epsilon(1e-12));
  }

  TEST_CASE("backward without zero_grad adds to existing gradients") {
    Parameter x = make_param("x", {0.5, -0.25}, 2);
    Tape t;
    t.backward(t.sum_all(t.use(x)));
    const Vec once = x.grad;
    t.reset();
    t.backward(t.sum_all(t.use(x)));
    for (int i = 0; i < 2; ++i) CHECK(x.grad[i] == 2.0 * once[i]);
  }

  TEST_CASE("adding a zeros node leaves values bitwise unchanged") {
    Tape t;
    const Vec v = {0.1, -2.7, 3.3e-9, 41.0};
    const Value sum = t.add(t.leaf(v, 4), t.zeros(4));
    for (int i = 0; i < 4; ++i) CHECK(t.data(sum)[i] == v[i]);
  }

  TEST_CASE("softmax cross-entropy against a by-hand computation") {
    Parameter logits = make_param("logits", {1.2, -0.7, 0.3}, 3);
    Tape t;
    const auto [loss, probs] = t.softmax_xent(t.use(logits), 2);

    double z = 0.0;
    for (double v : logits.value) z += std::exp(v);
    double psum = 0.0;
    for (int i = 0; i < 3; ++i) {
      CHECK(probs[i] ==
            doctest::Approx(std::exp(logits.value[i]) / z).epsilon(1e-12));
      psum += probs[i];
    }
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.data(loss)[0] ==
          doctest::Approx(std::log(z) - logits.value[2]).epsilon(1e-12));

    t.backward(loss);
    for (int i = 0; i < 3; ++i)
      CHECK(logits.grad[i] ==
            doctest::Approx(probs[i] - (i == 2 ? 1.0 : 0.0)).epsilon(1e-12));
  }

  TEST_CASE("layer_norm standardizes before gain and bias") {
    Tape t;
    const Vec v = {3.0, -1.0, 4.0, 0.0};
    const Vec ones = {1, 1, 1, 1};
    const Value out =
        t.layer_norm(t.leaf(v, 4), t.leaf(ones, 4), t.zeros(4), 1e-12);
    double mean = 0.0, var = 0.0;
    for (double o : t.data(out)) mean += o;
    mean /= 4.0;
    for (double o : t.data(out)) var += (o - mean) * (o - mean);
    var /= 4.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("reset clears nodes and the parameter binding cache") {
    Parameter x = make_param("x", {1.0, 2.0}, 2);
    Tape t;
    t.backward(t.sum_all(t.use(x)));
    CHECK(t.num_nodes() > 0);
    t.reset();
    CHECK(t.num_nodes() == 0);
    // A fresh graph on the reused tape still evaluates correctly.
    const Value y = t.axpb(t.use(x), 2.0, 1.0);
    CHECK(t.data(y)[0] == 3.0);
    CHECK(t.data(y)[1] == 5.0);
  }

  TEST_CASE("shape mismatches throw ShapeError naming the op") {
    Tape t;
    const Value a = t.zeros(3), b = t.zeros(4);
    try {
      t.add(a, b);
      FAIL("add accepted mismatched shapes");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
    try {
      t.affine(t.zeros(2, 3), t.zeros(4));
      FAIL("affine accepted mismatched shapes");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("affine") != std::string::npos);
    }
  }
}
