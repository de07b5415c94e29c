#include "twopass/nn.hpp"

#include <cmath>

namespace twopass {

Tensor& ParamSet::add(std::string name, Tensor t) {
  if (has(name)) throw ValueError("ParamSet: duplicate parameter " + name);
  t.validate();
  items.push_back(Entry{std::move(name), std::move(t)});
  return items.back().t;
}

const Tensor& ParamSet::get(std::string_view name) const {
  for (const Entry& e : items) {
    if (e.name == name) return e.t;
  }
  throw ValueError("ParamSet: no parameter named " + std::string(name));
}

Tensor& ParamSet::get(std::string_view name) {
  for (Entry& e : items) {
    if (e.name == name) return e.t;
  }
  throw ValueError("ParamSet: no parameter named " + std::string(name));
}

bool ParamSet::has(std::string_view name) const {
  for (const Entry& e : items) {
    if (e.name == name) return true;
  }
  return false;
}

std::int64_t ParamSet::total_size() const {
  std::int64_t n = 0;
  for (const Entry& e : items) n += e.t.numel();
  return n;
}

void ParamSet::alloc_grads() {
  for (Entry& e : items) e.t.alloc_grad();
}

void ParamSet::zero_grads() {
  for (Entry& e : items) {
    e.t.alloc_grad();
    e.t.zero_grad();
  }
}

std::vector<Scalar> ParamSet::flatten_values() const {
  std::vector<Scalar> out;
  out.reserve(static_cast<std::size_t>(total_size()));
  for (const Entry& e : items) {
    const Mat& m = e.t.values;
    out.insert(out.end(), m.data(), m.data() + m.size());
  }
  return out;
}

std::vector<Scalar> ParamSet::flatten_grads() const {
  std::vector<Scalar> out;
  out.reserve(static_cast<std::size_t>(total_size()));
  for (const Entry& e : items) {
    if (!e.t.grad) throw ValueError("ParamSet: missing grad on " + e.name);
    const Mat& m = *e.t.grad;
    out.insert(out.end(), m.data(), m.data() + m.size());
  }
  return out;
}

void ParamSet::set_flat_value(std::int64_t index, Scalar v) {
  for (Entry& e : items) {
    if (index < e.t.numel()) {
      e.t.values.data()[index] = v;
      return;
    }
    index -= e.t.numel();
  }
  throw ValueError("ParamSet: flat index out of range");
}

Scalar ParamSet::flat_value(std::int64_t index) const {
  for (const Entry& e : items) {
    if (index < e.t.numel()) return e.t.values.data()[index];
    index -= e.t.numel();
  }
  throw ValueError("ParamSet: flat index out of range");
}

NodeId BoundParams::id(std::string_view name) const {
  for (std::size_t i = 0; i < set->items.size(); ++i) {
    if (set->items[i].name == name) return ids[i];
  }
  throw ValueError("BoundParams: no parameter named " + std::string(name));
}

BoundParams bind_const(Tape& tape, const ParamSet& set) {
  BoundParams b;
  b.tape = &tape;
  b.set = &set;
  b.ids.reserve(set.items.size());
  for (const ParamSet::Entry& e : set.items) {
    Tensor t;
    t.shape = e.t.shape;
    t.values = e.t.values;
    b.ids.push_back(tape.leaf(std::move(t)));
  }
  return b;
}

BoundParams bind(Tape& tape, ParamSet& set) {
  BoundParams b = bind_const(tape, set);
  b.grad_target = &set;
  return b;
}

void accumulate_grads(const BoundParams& bound) {
  if (!bound.grad_target) {
    throw ValueError("accumulate_grads: parameters were bound read-only");
  }
  for (std::size_t i = 0; i < bound.ids.size(); ++i) {
    Tensor& t = bound.grad_target->items[i].t;
    t.alloc_grad();
    *t.grad += bound.tape->grad(bound.ids[i]);
  }
}

Mat init_uniform(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<Scalar> dist(-0.05, 0.05);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  }
  return m;
}

Tensor init_matrix(int rows, int cols, std::mt19937_64& rng) {
  return Tensor::from(init_uniform(rows, cols, rng));
}

Tensor init_vector(int n, std::mt19937_64& rng) {
  return Tensor::from(init_uniform(1, n, rng));
}

LstmState lstm_zero_state(Tape& tape, int rows, int hidden) {
  LstmState s;
  s.h = tape.constant(Mat::Zero(rows, hidden));
  s.c = tape.constant(Mat::Zero(rows, hidden));
  return s;
}

LstmState lstm_step(Tape& tape, NodeId x, const LstmState& state, NodeId w,
                    NodeId b) {
  const int hidden = static_cast<int>(tape.value(state.h).cols());
  if (tape.value(w).cols() != 4 * hidden) {
    throw ShapeError("lstm_step: weight cols != 4*hidden");
  }
  if (tape.value(x).rows() != tape.value(state.h).rows()) {
    throw ShapeError("lstm_step: batch rows of x and state disagree");
  }
  const NodeId parts[] = {x, state.h};
  NodeId z = tape.affine(tape.concat_cols(parts), w, b);
  NodeId gi = tape.sigmoid(tape.slice_cols(z, 0, hidden));
  NodeId gf = tape.sigmoid(tape.slice_cols(z, hidden, hidden));
  NodeId gc = tape.tanh(tape.slice_cols(z, 2 * hidden, hidden));
  NodeId go = tape.sigmoid(tape.slice_cols(z, 3 * hidden, hidden));
  LstmState next;
  next.c = tape.add(tape.mul(gf, state.c), tape.mul(gi, gc));
  next.h = tape.mul(go, tape.tanh(next.c));
  return next;
}

void add_lstm_params(ParamSet& set, const std::string& prefix, int input_dim,
                     int hidden, std::mt19937_64& rng) {
  set.add(prefix + ".w", init_matrix(input_dim + hidden, 4 * hidden, rng));
  set.add(prefix + ".b", init_vector(4 * hidden, rng));
}

void add_affine_params(ParamSet& set, const std::string& prefix, int input_dim,
                       int output_dim, std::mt19937_64& rng) {
  set.add(prefix + ".w", init_matrix(input_dim, output_dim, rng));
  set.add(prefix + ".b", init_vector(output_dim, rng));
}

NodeId affine_layer(Tape& tape, NodeId x, const BoundParams& p,
                    const std::string& prefix) {
  return tape.affine(x, p.id(prefix + ".w"), p.id(prefix + ".b"));
}

double finite_diff_check(const std::function<double(bool)>& loss,
                         std::span<ParamSet* const> params, double step,
                         double denom_floor) {
  if (step <= 0.0) throw ValueError("finite_diff_check: step must be > 0");
  for (ParamSet* p : params) p->zero_grads();
  const double base = loss(true);
  if (!std::isfinite(base)) {
    throw NumericError("finite_diff_check: non-finite loss");
  }
  std::vector<std::vector<Scalar>> analytic;
  analytic.reserve(params.size());
  for (ParamSet* p : params) analytic.push_back(p->flatten_grads());

  double worst = 0.0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    ParamSet& p = *params[s];
    const std::int64_t n = p.total_size();
    for (std::int64_t i = 0; i < n; ++i) {
      const Scalar keep = p.flat_value(i);
      p.set_flat_value(i, keep + step);
      const double up = loss(false);
      p.set_flat_value(i, keep - step);
      const double down = loss(false);
      p.set_flat_value(i, keep);
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_check: non-finite perturbed loss");
      }
      const double fd = (up - down) / (2.0 * step);
      const double bp = analytic[s][static_cast<std::size_t>(i)];
      const double denom =
          std::max({std::abs(fd), std::abs(bp), denom_floor});
      worst = std::max(worst, std::abs(fd - bp) / denom);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<double(bool)>& loss,
                         ParamSet& params, double step, double denom_floor) {
  ParamSet* p = &params;
  return finite_diff_check(loss, std::span<ParamSet* const>(&p, 1), step,
                           denom_floor);
}

}  // namespace twopass
