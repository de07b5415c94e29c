#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "twopass/nn.hpp"

using namespace twopass;

namespace {

// independent triple-loop oracle for x.w + b
Mat naive_affine(const Mat& x, const Mat& w, const Mat& b) {
  Mat out = Mat::Zero(x.rows(), w.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) acc += x(i, k) * w(k, j);
      out(i, j) = acc + b(0, j);
    }
  }
  return out;
}

// extended-precision softmax oracle
std::vector<double> softmax_ld(const std::vector<double>& v) {
  long double m = v[0];
  for (double x : v) m = std::max<long double>(m, x);
  long double z = 0.0L;
  for (double x : v) z += expl(static_cast<long double>(x) - m);
  std::vector<double> out;
  for (double x : v) {
    out.push_back(
        static_cast<double>(expl(static_cast<long double>(x) - m) / z));
  }
  return out;
}

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t = Tensor::matrix(2, 3, 1.0);
  CHECK(t.numel() == 6);
  t.validate();
  Tensor v = Tensor::vector(4);
  CHECK(v.shape == std::vector<int>{4});
  CHECK(v.values.rows() == 1);
  CHECK_THROWS_AS(Tensor::matrix(0, 3), ShapeError);
  Tensor bad = Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(bad.validate(), NumericError);
}

TEST_CASE("affine identity cases") {
  Tape tape;
  NodeId x = tape.constant(Mat::Identity(2, 2));
  NodeId w = tape.constant(Mat::Identity(2, 2));
  NodeId b = tape.constant(Mat::Zero(1, 2));
  NodeId y = tape.affine(x, w, b);
  CHECK(tape.value(y).isApprox(Mat::Identity(2, 2), 0.0));

  // identity weight plus bias
  Mat xv(1, 2);
  xv << 1, 2;
  Mat bv(1, 2);
  bv << 1, 1;
  NodeId y2 = tape.affine(tape.constant(xv), w, tape.constant(bv));
  Mat expect(1, 2);
  expect << 2, 3;
  CHECK(tape.value(y2) == expect);
}

TEST_CASE("affine matches the naive triple-loop oracle") {
  std::mt19937_64 rng(42);
  Mat x = random_mat(3, 4, rng);
  Mat w = random_mat(4, 2, rng);
  Mat b = random_mat(1, 2, rng);
  Tape tape;
  NodeId y =
      tape.affine(tape.constant(x), tape.constant(w), tape.constant(b));
  Mat expect = naive_affine(x, w, b);
  CHECK((tape.value(y) - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("affine rejects mismatched shapes with both shapes reported") {
  Tape tape;
  NodeId x = tape.constant(Mat::Zero(2, 3));
  NodeId w = tape.constant(Mat::Zero(4, 2));
  NodeId b = tape.constant(Mat::Zero(1, 2));
  try {
    tape.affine(x, w, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("lstm_step zero-weight cases") {
  // all-zero weights and state: h' = c' = 0 for any input
  Tape tape;
  const int d = 3;
  NodeId w = tape.constant(Mat::Zero(2 + d, 4 * d));
  NodeId b = tape.constant(Mat::Zero(1, 4 * d));
  LstmState s0 = lstm_zero_state(tape, 1, d);
  Mat xv(1, 2);
  xv << 0.7, -1.3;
  LstmState s1 = lstm_step(tape, tape.constant(xv), s0, w, b);
  CHECK(tape.value(s1.h).isZero(0.0));
  CHECK(tape.value(s1.c).isZero(0.0));
}

TEST_CASE("lstm_step d=1 zero-parameter cell with c=1") {
  // c' = sigma(0)*1 + sigma(0)*tanh(0) = 0.5, h' = sigma(0)*tanh(0.5)
  Tape tape;
  NodeId w = tape.constant(Mat::Zero(2, 4));
  NodeId b = tape.constant(Mat::Zero(1, 4));
  LstmState s;
  s.h = tape.constant(Mat::Zero(1, 1));
  s.c = tape.constant(Mat::Ones(1, 1));
  LstmState s1 = lstm_step(tape, tape.constant(Mat::Zero(1, 1)), s, w, b);
  CHECK(tape.value(s1.c)(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(tape.value(s1.h)(0, 0) ==
        doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
}

TEST_CASE("lstm_step gradient matches central finite differences") {
  std::mt19937_64 rng(7);
  ParamSet params;
  add_lstm_params(params, "cell", 2, 3, rng);
  Mat xv = random_mat(1, 2, rng);
  Mat h0 = random_mat(1, 3, rng, 0.3);
  Mat c0 = random_mat(1, 3, rng, 0.3);
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    LstmState s{tape.constant(h0), tape.constant(c0)};
    LstmState s1 =
        lstm_step(tape, tape.constant(xv), s, p.id("cell.w"), p.id("cell.b"));
    NodeId loss_node = tape.sum(s1.h);
    const double v = tape.scalar_value(loss_node);
    if (with_grad) {
      tape.backward(loss_node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-5);
}

TEST_CASE("softmax rows: uniform, shift invariance, oracle") {
  Tape tape;
  Mat z(1, 3);
  z << 0, 0, 0;
  NodeId u = tape.softmax_rows(tape.constant(z));
  for (int j = 0; j < 3; ++j) {
    CHECK(tape.value(u)(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }

  Mat x(1, 3);
  x << 1, 2, 3;
  NodeId p = tape.softmax_rows(tape.constant(x));
  NodeId p_shift =
      tape.softmax_rows(tape.constant((x.array() + 10.0).matrix()));
  CHECK(tape.value(p) == tape.value(p_shift));  // exact with dyadic shift

  const std::vector<double> oracle = softmax_ld({1, 2, 3});
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(tape.value(p)(0, j) - oracle[static_cast<std::size_t>(j)]) <=
          1e-12);
  }
}

TEST_CASE("softmax rows sum to one within 1e-12 on random inputs") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Mat x = random_mat(4, 7, rng, 20.0);
    Tape tape;
    const Mat p = tape.value(tape.softmax_rows(tape.constant(x)));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
      CHECK(p.row(i).minCoeff() >= 0.0);
      CHECK(p.row(i).maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("cross entropy analytic values") {
  // probability ~1 on the target: loss ~ 0
  Tape tape;
  Mat big(1, 3);
  big << 100.0, 0.0, 0.0;
  NodeId l0 = tape.cross_entropy(tape.constant(big), {0});
  CHECK(tape.scalar_value(l0) <= 1e-12);

  // uniform logits over V=4: loss = ln 4
  NodeId l1 = tape.cross_entropy(tape.constant(Mat::Zero(2, 4)), {1, 3});
  CHECK(tape.scalar_value(l1) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  CHECK_THROWS_AS(tape.cross_entropy(tape.constant(Mat::Zero(1, 4)), {4}),
                  ValueError);
}

TEST_CASE("cross entropy matches brute-force softmax-then-log oracle") {
  std::mt19937_64 rng(11);
  Mat logits = random_mat(5, 6, rng, 3.0);
  std::vector<int> targets = {2, 0, 5, 1, 3};
  Tape tape;
  const double got =
      tape.scalar_value(tape.cross_entropy(tape.constant(logits), targets));
  long double acc = 0.0L;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> row(logits.row(i).data(),
                            logits.row(i).data() + logits.cols());
    const std::vector<double> p = softmax_ld(row);
    acc += -logl(static_cast<long double>(
        p[static_cast<std::size_t>(targets[static_cast<std::size_t>(i)])]));
  }
  CHECK(std::abs(got - static_cast<double>(acc / 5.0L)) <= 1e-10);
}

TEST_CASE("backprop: linear loss gives exact gradients") {
  // loss = sum w_i x_i  =>  dloss/dw = x exactly
  Tape tape;
  Mat xv(1, 4);
  xv << 2, -3, 0.5, 7;
  Tensor w = Tensor::vector(4, 1.0);
  NodeId wn = tape.leaf(w);
  NodeId loss = tape.sum(tape.mul(wn, tape.constant(xv)));
  tape.backward(loss);
  CHECK(tape.grad(wn) == xv);
}

TEST_CASE("backprop: gradient of a constant path is zero") {
  Tape tape;
  NodeId w = tape.leaf(Tensor::vector(3, 2.0));
  NodeId c = tape.constant_scalar(5.0);
  // loss touches only the constant: grad w must be exactly zero
  NodeId loss = tape.scale(c, 2.0);
  tape.backward(loss);
  CHECK(tape.grad(w).isZero(0.0));
}

TEST_CASE("backprop rejects non-scalar losses") {
  Tape tape;
  NodeId x = tape.constant(Mat::Zero(2, 2));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("backprop is deterministic after zeroing") {
  std::mt19937_64 rng(5);
  ParamSet params;
  add_affine_params(params, "lin", 3, 2, rng);
  Mat xv = random_mat(2, 3, rng);
  std::vector<Scalar> first, second;
  for (int round = 0; round < 2; ++round) {
    params.zero_grads();
    Tape tape;
    BoundParams p = bind(tape, params);
    NodeId y = tape.tanh(affine_layer(tape, tape.constant(xv), p, "lin"));
    NodeId loss = tape.mean(y);
    tape.backward(loss);
    accumulate_grads(p);
    (round == 0 ? first : second) = params.flatten_grads();
  }
  CHECK(first == second);  // bit-identical
}

TEST_CASE("finite_diff_check: quadratic is exact to 1e-9") {
  ParamSet params;
  params.add("p", Tensor::scalar(3.0));
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    NodeId node = tape.mul(p.ids[0], p.ids[0]);
    const double v = tape.scalar_value(node);
    if (with_grad) {
      tape.backward(node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-9);
}

TEST_CASE("finite_diff_check: softmax cross-entropy stack") {
  std::mt19937_64 rng(17);
  ParamSet params;
  add_affine_params(params, "out", 4, 5, rng);
  Mat xv = random_mat(3, 4, rng);
  const std::vector<int> targets = {1, 4, 0};
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    NodeId logits = affine_layer(tape, tape.constant(xv), p, "out");
    NodeId node = tape.cross_entropy(logits, targets);
    const double v = tape.scalar_value(node);
    if (with_grad) {
      tape.backward(node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-6);
}

TEST_CASE("finite_diff_check: two-layer LSTM stack loss") {
  std::mt19937_64 rng(23);
  ParamSet params;
  add_lstm_params(params, "l0", 3, 4, rng);
  add_lstm_params(params, "l1", 4, 3, rng);
  add_affine_params(params, "out", 3, 2, rng);
  Mat xs = random_mat(5, 3, rng);
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    LstmState s0 = lstm_zero_state(tape, 1, 4);
    LstmState s1 = lstm_zero_state(tape, 1, 3);
    NodeId acc = kNoNode;
    for (int t = 0; t < 5; ++t) {
      NodeId x = tape.constant(Mat(xs.row(t)));
      s0 = lstm_step(tape, x, s0, p.id("l0.w"), p.id("l0.b"));
      s1 = lstm_step(tape, s0.h, s1, p.id("l1.w"), p.id("l1.b"));
      NodeId y = tape.sum(affine_layer(tape, s1.h, p, "out"));
      acc = acc == kNoNode ? y : tape.add(acc, y);
    }
    const double v = tape.scalar_value(acc);
    if (with_grad) {
      tape.backward(acc);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-4);
}

TEST_CASE("randomized composed graphs match finite differences over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    ParamSet params;
    add_lstm_params(params, "cell", 2, 3, rng);
    add_affine_params(params, "out", 3, 4, rng);
    Mat xs = random_mat(4, 2, rng);
    const std::vector<int> targets = {static_cast<int>(seed % 4),
                                      static_cast<int>((seed + 1) % 4),
                                      static_cast<int>((seed + 2) % 4),
                                      static_cast<int>((seed + 3) % 4)};
    auto loss = [&](bool with_grad) {
      Tape tape;
      BoundParams p = bind(tape, params);
      LstmState s = lstm_zero_state(tape, 1, 3);
      std::vector<NodeId> rows;
      for (int t = 0; t < 4; ++t) {
        s = lstm_step(tape, tape.constant(Mat(xs.row(t))), s, p.id("cell.w"),
                      p.id("cell.b"));
        rows.push_back(affine_layer(tape, s.h, p, "out"));
      }
      NodeId node = tape.cross_entropy(tape.concat_rows(rows), targets);
      const double v = tape.scalar_value(node);
      if (with_grad) {
        tape.backward(node);
        accumulate_grads(p);
      }
      return v;
    };
    CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-4);
  }
}

TEST_CASE("logaddexp and softmax backward agree with finite differences") {
  std::mt19937_64 rng(31);
  ParamSet params;
  params.add("v", Tensor::from(random_mat(1, 6, rng)));
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    NodeId a = tape.slice_cols(p.ids[0], 0, 3);
    NodeId b = tape.slice_cols(p.ids[0], 3, 3);
    NodeId lse = tape.logaddexp(a, b);
    NodeId soft = tape.log_softmax_rows(lse);
    NodeId node = tape.sum(tape.mul(soft, tape.constant(Mat::Ones(1, 3))));
    const double v = tape.scalar_value(node);
    if (with_grad) {
      tape.backward(node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-6);
}

TEST_CASE("non-finite forward values are a hard error") {
  Tape tape;
  NodeId big = tape.constant_scalar(1e308);
  CHECK_THROWS_AS(tape.mul(big, big), NumericError);
}

TEST_CASE("shaping ops round-trip gradients") {
  std::mt19937_64 rng(41);
  ParamSet params;
  params.add("m", Tensor::from(random_mat(3, 4, rng)));
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    NodeId rep = tape.repeat_each_row(p.ids[0], 2);
    NodeId tiled = tape.repeat_rows(p.ids[0], 2);
    const NodeId both[] = {rep, tiled};
    NodeId cat = tape.concat_rows(both);
    NodeId tc = tape.time_concat(cat, 3);
    NodeId node = tape.mean(tape.tanh(tc));
    const double v = tape.scalar_value(node);
    if (with_grad) {
      tape.backward(node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-6);
}

TEST_CASE("embedding rows gather and scatter") {
  std::mt19937_64 rng(43);
  ParamSet params;
  params.add("table", Tensor::from(random_mat(5, 3, rng)));
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, params);
    NodeId rows = tape.embedding_rows(p.ids[0], {1, 3, 1});
    NodeId node = tape.sum(tape.sigmoid(rows));
    const double v = tape.scalar_value(node);
    if (with_grad) {
      tape.backward(node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, params, 1e-5) <= 1e-6);
}
