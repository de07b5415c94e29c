#ifndef TWOPASS_TAPE_HPP
#define TWOPASS_TAPE_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "twopass/tensor.hpp"

namespace twopass {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order, so construction order is a topological order by definition and
// backward() replays the records strictly in reverse. Every primitive
// checks its output for NaN/Inf and fails hard. A tape is confined to one
// thread of control; run independent graphs on independent tapes.
class Tape {
 public:
  // ---- leaves -------------------------------------------------------------
  NodeId leaf(Tensor t);
  NodeId constant(Mat m) { return leaf(Tensor::from(std::move(m))); }
  NodeId constant_scalar(Scalar v) { return leaf(Tensor::scalar(v)); }

  // ---- elementwise --------------------------------------------------------
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, Scalar c);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  // log(exp(a) + exp(b)), elementwise, computed around the running maximum
  NodeId logaddexp(NodeId a, NodeId b);

  // ---- linear algebra -----------------------------------------------------
  NodeId matmul(NodeId a, NodeId b);             // a . b
  NodeId matmul_nt(NodeId a, NodeId b);          // a . b^T
  NodeId affine(NodeId x, NodeId w, NodeId b);   // x . w + row-broadcast b

  // ---- shaping ------------------------------------------------------------
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId slice_cols(NodeId a, int begin, int count);
  NodeId row(NodeId a, int r);
  NodeId pick(NodeId a, int r, int c);           // scalar element
  NodeId repeat_rows(NodeId a, int times);       // [A; A; ...] block tile
  NodeId repeat_each_row(NodeId a, int times);   // each row repeated in place
  // rows 0..ceil(T/factor)-1, each the concatenation of `factor` adjacent
  // input rows; a ragged final group repeats the last input row
  NodeId time_concat(NodeId a, int factor);
  NodeId embedding_rows(NodeId table, const std::vector<int>& ids);

  // ---- reductions and losses ----------------------------------------------
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId log_softmax_rows(NodeId a);
  // mean over rows of -log_softmax(logits)[i, target_i]
  NodeId cross_entropy(NodeId logits, const std::vector<int>& targets);
  // adds `penalty` to the listed columns of every row (used to retire
  // reserved symbols from an output softmax)
  NodeId add_to_cols(NodeId a, const std::vector<int>& cols, Scalar penalty);

  // ---- execution ----------------------------------------------------------
  // Seeds d(loss)/d(loss) = 1 and visits the tape in exact reverse order,
  // accumulating into every node's grad. Loss must be scalar.
  void backward(NodeId loss);
  void zero_grad();

  const Tensor& at(NodeId id) const { return nodes_[check(id)].t; }
  const Mat& value(NodeId id) const { return at(id).values; }
  Scalar scalar_value(NodeId id) const;
  const Mat& grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  // g_out is the gradient flowing into the node's output
  using BackFn = std::function<void(Tape&, const Mat&)>;

  struct Node {
    Tensor t;
    BackFn back;  // empty for leaves
  };

  std::size_t check(NodeId id) const;
  NodeId push(Tensor t, BackFn back, const char* op);
  Mat& grad_buf(NodeId id) { return *nodes_[check(id)].t.grad; }

  std::vector<Node> nodes_;
};

}  // namespace twopass

#endif  // TWOPASS_TAPE_HPP
