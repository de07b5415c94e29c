#include "twopass/tape.hpp"

#include <algorithm>
#include <cmath>

namespace twopass {

namespace {

void require_same_dims(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand dims " + shape_string(a) +
                     " vs " + shape_string(b));
  }
}

}  // namespace

std::size_t Tape::check(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ValueError("tape: node id out of range");
  }
  return static_cast<std::size_t>(id);
}

NodeId Tape::push(Tensor t, BackFn back, const char* op) {
  if (!t.values.allFinite()) {
    throw NumericError(std::string("non-finite values produced by ") + op);
  }
  nodes_.push_back(Node{std::move(t), std::move(back)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor t) {
  t.validate();
  return push(std::move(t), nullptr, "leaf");
}

Scalar Tape::scalar_value(NodeId id) const {
  const Tensor& t = at(id);
  if (!t.is_scalar()) throw ShapeError("scalar_value: node is not scalar");
  return t.values(0, 0);
}

const Mat& Tape::grad(NodeId id) const {
  const Tensor& t = at(id);
  if (!t.grad) throw ValueError("tape: grad requested before backward()");
  return *t.grad;
}

// ---- elementwise ------------------------------------------------------------

NodeId Tape::add(NodeId a, NodeId b) {
  require_same_dims(value(a), value(b), "add");
  Tensor out = Tensor::from(value(a) + value(b));
  out.shape = at(a).shape;
  return push(std::move(out),
              [a, b](Tape& tp, const Mat& g) {
                tp.grad_buf(a) += g;
                tp.grad_buf(b) += g;
              },
              "add");
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require_same_dims(value(a), value(b), "sub");
  Tensor out = Tensor::from(value(a) - value(b));
  out.shape = at(a).shape;
  return push(std::move(out),
              [a, b](Tape& tp, const Mat& g) {
                tp.grad_buf(a) += g;
                tp.grad_buf(b) -= g;
              },
              "sub");
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_dims(value(a), value(b), "mul");
  Tensor out = Tensor::from(value(a).cwiseProduct(value(b)));
  out.shape = at(a).shape;
  return push(std::move(out),
              [a, b](Tape& tp, const Mat& g) {
                tp.grad_buf(a) += g.cwiseProduct(tp.value(b));
                tp.grad_buf(b) += g.cwiseProduct(tp.value(a));
              },
              "mul");
}

NodeId Tape::scale(NodeId a, Scalar c) {
  Tensor out = Tensor::from(value(a) * c);
  out.shape = at(a).shape;
  return push(std::move(out),
              [a, c](Tape& tp, const Mat& g) { tp.grad_buf(a) += c * g; },
              "scale");
}

NodeId Tape::sigmoid(NodeId a) {
  Tensor out = Tensor::from(
      value(a).unaryExpr([](Scalar v) { return 1.0 / (1.0 + std::exp(-v)); }));
  out.shape = at(a).shape;
  NodeId id = push(std::move(out), nullptr, "sigmoid");
  nodes_[id].back = [a, id](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(id);
    tp.grad_buf(a).array() += g.array() * y.array() * (1.0 - y.array());
  };
  return id;
}

NodeId Tape::tanh(NodeId a) {
  Tensor out = Tensor::from(value(a).array().tanh().matrix());
  out.shape = at(a).shape;
  NodeId id = push(std::move(out), nullptr, "tanh");
  nodes_[id].back = [a, id](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(id);
    tp.grad_buf(a).array() += g.array() * (1.0 - y.array().square());
  };
  return id;
}

NodeId Tape::logaddexp(NodeId a, NodeId b) {
  require_same_dims(value(a), value(b), "logaddexp");
  const Mat& va = value(a);
  const Mat& vb = value(b);
  Mat m = va.cwiseMax(vb);
  Mat out = m.array() +
            ((va - m).array().exp() + (vb - m).array().exp()).log();
  Tensor t = Tensor::from(std::move(out));
  t.shape = at(a).shape;
  NodeId id = push(std::move(t), nullptr, "logaddexp");
  nodes_[id].back = [a, b, id](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(id);
    tp.grad_buf(a).array() += g.array() * (tp.value(a) - y).array().exp();
    tp.grad_buf(b).array() += g.array() * (tp.value(b) - y).array().exp();
  };
  return id;
}

// ---- linear algebra ---------------------------------------------------------

NodeId Tape::matmul(NodeId a, NodeId b) {
  if (value(a).cols() != value(b).rows()) {
    throw ShapeError("matmul: inner dims disagree, " + shape_string(value(a)) +
                     " . " + shape_string(value(b)));
  }
  return push(Tensor::from(value(a) * value(b)),
              [a, b](Tape& tp, const Mat& g) {
                tp.grad_buf(a) += g * tp.value(b).transpose();
                tp.grad_buf(b) += tp.value(a).transpose() * g;
              },
              "matmul");
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  if (value(a).cols() != value(b).cols()) {
    throw ShapeError("matmul_nt: inner dims disagree, " +
                     shape_string(value(a)) + " . " + shape_string(value(b)) +
                     "^T");
  }
  return push(Tensor::from(value(a) * value(b).transpose()),
              [a, b](Tape& tp, const Mat& g) {
                tp.grad_buf(a) += g * tp.value(b);
                tp.grad_buf(b) += g.transpose() * tp.value(a);
              },
              "matmul_nt");
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  const Mat& vx = value(x);
  const Mat& vw = value(w);
  const Mat& vb = value(b);
  if (vx.cols() != vw.rows() || vb.rows() != 1 || vb.cols() != vw.cols()) {
    throw ShapeError("affine: dims disagree, x=" + shape_string(vx) +
                     " w=" + shape_string(vw) + " b=" + shape_string(vb));
  }
  Mat out = vx * vw;
  out.rowwise() += vb.row(0);
  return push(Tensor::from(std::move(out)),
              [x, w, b](Tape& tp, const Mat& g) {
                tp.grad_buf(x) += g * tp.value(w).transpose();
                tp.grad_buf(w) += tp.value(x).transpose() * g;
                tp.grad_buf(b) += g.colwise().sum();
              },
              "affine");
}

// ---- shaping ------------------------------------------------------------

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (NodeId p : parts) {
    if (value(p).rows() != rows) {
      throw ShapeError("concat_cols: row counts disagree");
    }
    cols += value(p).cols();
  }
  Mat out(rows, cols);
  Eigen::Index at_col = 0;
  for (NodeId p : parts) {
    out.middleCols(at_col, value(p).cols()) = value(p);
    at_col += value(p).cols();
  }
  std::vector<NodeId> ps(parts.begin(), parts.end());
  return push(Tensor::from(std::move(out)),
              [ps](Tape& tp, const Mat& g) {
                Eigen::Index c = 0;
                for (NodeId p : ps) {
                  Eigen::Index w = tp.value(p).cols();
                  tp.grad_buf(p) += g.middleCols(c, w);
                  c += w;
                }
              },
              "concat_cols");
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (NodeId p : parts) {
    if (value(p).cols() != cols) {
      throw ShapeError("concat_rows: column counts disagree");
    }
    rows += value(p).rows();
  }
  Mat out(rows, cols);
  Eigen::Index at_row = 0;
  for (NodeId p : parts) {
    out.middleRows(at_row, value(p).rows()) = value(p);
    at_row += value(p).rows();
  }
  std::vector<NodeId> ps(parts.begin(), parts.end());
  Tensor t = Tensor::from(std::move(out));
  t.shape = {static_cast<int>(rows), static_cast<int>(cols)};
  return push(std::move(t),
              [ps](Tape& tp, const Mat& g) {
                Eigen::Index r = 0;
                for (NodeId p : ps) {
                  Eigen::Index h = tp.value(p).rows();
                  tp.grad_buf(p) += g.middleRows(r, h);
                  r += h;
                }
              },
              "concat_rows");
}

NodeId Tape::slice_cols(NodeId a, int begin, int count) {
  const Mat& v = value(a);
  if (begin < 0 || count < 1 || begin + count > v.cols()) {
    throw ShapeError("slice_cols: range outside " + shape_string(v));
  }
  return push(Tensor::from(Mat(v.middleCols(begin, count))),
              [a, begin, count](Tape& tp, const Mat& g) {
                tp.grad_buf(a).middleCols(begin, count) += g;
              },
              "slice_cols");
}

NodeId Tape::row(NodeId a, int r) {
  const Mat& v = value(a);
  if (r < 0 || r >= v.rows()) {
    throw ShapeError("row: index outside " + shape_string(v));
  }
  return push(Tensor::from(Mat(v.row(r))),
              [a, r](Tape& tp, const Mat& g) { tp.grad_buf(a).row(r) += g; },
              "row");
}

NodeId Tape::pick(NodeId a, int r, int c) {
  const Mat& v = value(a);
  if (r < 0 || r >= v.rows() || c < 0 || c >= v.cols()) {
    throw ShapeError("pick: index outside " + shape_string(v));
  }
  return push(Tensor::scalar(v(r, c)),
              [a, r, c](Tape& tp, const Mat& g) {
                tp.grad_buf(a)(r, c) += g(0, 0);
              },
              "pick");
}

NodeId Tape::repeat_rows(NodeId a, int times) {
  if (times < 1) throw ShapeError("repeat_rows: times must be positive");
  const Mat& v = value(a);
  Mat out(v.rows() * times, v.cols());
  for (int k = 0; k < times; ++k) out.middleRows(k * v.rows(), v.rows()) = v;
  return push(Tensor::from(std::move(out)),
              [a, times](Tape& tp, const Mat& g) {
                Eigen::Index h = tp.value(a).rows();
                for (int k = 0; k < times; ++k) {
                  tp.grad_buf(a) += g.middleRows(k * h, h);
                }
              },
              "repeat_rows");
}

NodeId Tape::repeat_each_row(NodeId a, int times) {
  if (times < 1) throw ShapeError("repeat_each_row: times must be positive");
  const Mat& v = value(a);
  Mat out(v.rows() * times, v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (int k = 0; k < times; ++k) out.row(i * times + k) = v.row(i);
  }
  return push(Tensor::from(std::move(out)),
              [a, times](Tape& tp, const Mat& g) {
                Mat& ga = tp.grad_buf(a);
                for (Eigen::Index i = 0; i < ga.rows(); ++i) {
                  for (int k = 0; k < times; ++k) {
                    ga.row(i) += g.row(i * times + k);
                  }
                }
              },
              "repeat_each_row");
}

NodeId Tape::time_concat(NodeId a, int factor) {
  if (factor < 1) throw ShapeError("time_concat: factor must be positive");
  const Mat& v = value(a);
  const Eigen::Index t_in = v.rows();
  const Eigen::Index d = v.cols();
  const Eigen::Index t_out = (t_in + factor - 1) / factor;
  Mat out(t_out, d * factor);
  for (Eigen::Index j = 0; j < t_out; ++j) {
    for (int m = 0; m < factor; ++m) {
      Eigen::Index src = std::min(j * factor + m, t_in - 1);
      out.block(j, m * d, 1, d) = v.row(src);
    }
  }
  return push(Tensor::from(std::move(out)),
              [a, factor](Tape& tp, const Mat& g) {
                Mat& ga = tp.grad_buf(a);
                const Eigen::Index t_in = ga.rows();
                const Eigen::Index d = ga.cols();
                for (Eigen::Index j = 0; j < g.rows(); ++j) {
                  for (int m = 0; m < factor; ++m) {
                    Eigen::Index src = std::min(j * factor + m, t_in - 1);
                    ga.row(src) += g.block(j, m * d, 1, d);
                  }
                }
              },
              "time_concat");
}

NodeId Tape::embedding_rows(NodeId table, const std::vector<int>& ids) {
  const Mat& v = value(table);
  if (ids.empty()) throw ShapeError("embedding_rows: no ids");
  Mat out(static_cast<Eigen::Index>(ids.size()), v.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v.rows()) {
      throw ValueError("embedding_rows: id " + std::to_string(ids[i]) +
                       " outside table with " + std::to_string(v.rows()) +
                       " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = v.row(ids[i]);
  }
  Tensor t = Tensor::from(std::move(out));
  t.shape = {static_cast<int>(ids.size()), static_cast<int>(v.cols())};
  return push(std::move(t),
              [table, ids](Tape& tp, const Mat& g) {
                Mat& gt = tp.grad_buf(table);
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                }
              },
              "embedding_rows");
}

// ---- reductions and losses ----------------------------------------------

NodeId Tape::sum(NodeId a) {
  return push(Tensor::scalar(value(a).sum()),
              [a](Tape& tp, const Mat& g) {
                tp.grad_buf(a).array() += g(0, 0);
              },
              "sum");
}

NodeId Tape::mean(NodeId a) {
  const Scalar n = static_cast<Scalar>(value(a).size());
  return push(Tensor::scalar(value(a).sum() / n),
              [a, n](Tape& tp, const Mat& g) {
                tp.grad_buf(a).array() += g(0, 0) / n;
              },
              "mean");
}

NodeId Tape::softmax_rows(NodeId a) {
  const Mat& v = value(a);
  if (v.cols() < 1) throw ShapeError("softmax_rows: empty rows");
  Mat out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Scalar m = v.row(i).maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (v.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  Tensor t = Tensor::from(std::move(out));
  t.shape = at(a).shape;
  NodeId id = push(std::move(t), nullptr, "softmax_rows");
  nodes_[id].back = [a, id](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(id);
    Mat& ga = tp.grad_buf(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const Scalar dot = g.row(i).cwiseProduct(y.row(i)).sum();
      ga.row(i).array() += (g.row(i).array() - dot) * y.row(i).array();
    }
  };
  return id;
}

NodeId Tape::log_softmax_rows(NodeId a) {
  const Mat& v = value(a);
  if (v.cols() < 1) throw ShapeError("log_softmax_rows: empty rows");
  Mat out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Scalar m = v.row(i).maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> shifted = v.row(i).array() - m;
    const Scalar lse = std::log(shifted.exp().sum());
    out.row(i) = (shifted - lse).matrix();
  }
  Tensor t = Tensor::from(std::move(out));
  t.shape = at(a).shape;
  NodeId id = push(std::move(t), nullptr, "log_softmax_rows");
  nodes_[id].back = [a, id](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(id);
    Mat& ga = tp.grad_buf(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const Scalar gsum = g.row(i).sum();
      ga.row(i).array() += g.row(i).array() - gsum * y.row(i).array().exp();
    }
  };
  return id;
}

NodeId Tape::cross_entropy(NodeId logits, const std::vector<int>& targets) {
  const Mat& v = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != v.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(v.rows()) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= v.cols()) {
      throw ValueError("cross_entropy: target id " + std::to_string(t) +
                       " outside [0, " + std::to_string(v.cols()) + ")");
    }
  }
  const Eigen::Index n = v.rows();
  Scalar loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar m = v.row(i).maxCoeff();
    const Scalar lse =
        std::log((v.row(i).array() - m).exp().sum()) + m;
    loss -= v(i, targets[static_cast<std::size_t>(i)]) - lse;
  }
  loss /= static_cast<Scalar>(n);
  return push(Tensor::scalar(loss),
              [logits, targets, n](Tape& tp, const Mat& g) {
                const Mat& v = tp.value(logits);
                Mat& gl = tp.grad_buf(logits);
                const Scalar gs = g(0, 0) / static_cast<Scalar>(n);
                for (Eigen::Index i = 0; i < n; ++i) {
                  const Scalar m = v.row(i).maxCoeff();
                  Eigen::Array<Scalar, 1, Eigen::Dynamic> e =
                      (v.row(i).array() - m).exp();
                  Eigen::Array<Scalar, 1, Eigen::Dynamic> p = e / e.sum();
                  gl.row(i).array() += gs * p;
                  gl(i, targets[static_cast<std::size_t>(i)]) -= gs;
                }
              },
              "cross_entropy");
}

NodeId Tape::add_to_cols(NodeId a, const std::vector<int>& cols, Scalar penalty) {
  Mat out = value(a);
  for (int c : cols) {
    if (c < 0 || c >= out.cols()) {
      throw ShapeError("add_to_cols: column outside " + shape_string(out));
    }
    out.col(c).array() += penalty;
  }
  Tensor t = Tensor::from(std::move(out));
  t.shape = at(a).shape;
  return push(std::move(t),
              [a](Tape& tp, const Mat& g) { tp.grad_buf(a) += g; },
              "add_to_cols");
}

// ---- execution ------------------------------------------------------------

void Tape::zero_grad() {
  for (Node& n : nodes_) n.t.zero_grad();
}

void Tape::backward(NodeId loss) {
  const Tensor& lt = at(loss);
  if (!lt.is_scalar()) {
    throw ShapeError("backward: loss node must be scalar, got " +
                     shape_string(lt.values));
  }
  for (Node& n : nodes_) n.t.alloc_grad();
  (*nodes_[check(loss)].t.grad)(0, 0) += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back) n.back(*this, *n.t.grad);
  }
  for (const Node& n : nodes_) {
    if (!n.t.grad->allFinite()) {
      throw NumericError("non-finite gradient produced during backward");
    }
  }
}

}  // namespace twopass
