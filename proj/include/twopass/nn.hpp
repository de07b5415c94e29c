#ifndef TWOPASS_NN_HPP
#define TWOPASS_NN_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "twopass/tape.hpp"

namespace twopass {

// Ordered collection of named parameter tensors. Order is fixed by
// construction and shared by checkpoints, SGD updates and gradient
// flattening, which keeps every reduction bit-reproducible.
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor t;
  };
  std::vector<Entry> items;

  Tensor& add(std::string name, Tensor t);
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool has(std::string_view name) const;

  std::int64_t total_size() const;
  void alloc_grads();
  void zero_grads();

  // flat row-major views across all entries, in declaration order
  std::vector<Scalar> flatten_values() const;
  std::vector<Scalar> flatten_grads() const;
  void set_flat_value(std::int64_t index, Scalar v);
  Scalar flat_value(std::int64_t index) const;
};

// Per-tape view of a ParamSet: every entry becomes a leaf node.
struct BoundParams {
  Tape* tape = nullptr;
  const ParamSet* set = nullptr;  // names and order
  ParamSet* grad_target = nullptr;  // null for read-only binds
  std::vector<NodeId> ids;

  NodeId id(std::string_view name) const;
};

BoundParams bind(Tape& tape, ParamSet& set);
BoundParams bind_const(Tape& tape, const ParamSet& set);

// Adds the tape gradients of every bound parameter into the ParamSet's own
// grad buffers (call after Tape::backward).
void accumulate_grads(const BoundParams& bound);

// Uniform [-0.05, 0.05] init, seeded.
Mat init_uniform(int rows, int cols, std::mt19937_64& rng);
Tensor init_matrix(int rows, int cols, std::mt19937_64& rng);
Tensor init_vector(int n, std::mt19937_64& rng);

// ---- recurrent cell --------------------------------------------------------

struct LstmState {
  NodeId h = kNoNode;
  NodeId c = kNoNode;
};

// Gate layout in w/b is [input | forget | cell | output], each `hidden` wide.
// w: (input_dim + hidden) x 4*hidden, b: 4*hidden. x may carry a batch of
// rows; the recurrence is row-independent.
LstmState lstm_step(Tape& tape, NodeId x, const LstmState& state, NodeId w,
                    NodeId b);

LstmState lstm_zero_state(Tape& tape, int rows, int hidden);

// Registers the w/b pair for one LSTM layer under `prefix`.
void add_lstm_params(ParamSet& set, const std::string& prefix, int input_dim,
                     int hidden, std::mt19937_64& rng);

// Registers w/b for a plain affine layer under `prefix`.
void add_affine_params(ParamSet& set, const std::string& prefix, int input_dim,
                       int output_dim, std::mt19937_64& rng);

NodeId affine_layer(Tape& tape, NodeId x, const BoundParams& p,
                    const std::string& prefix);

// ---- gradient checking -------------------------------------------------

// loss(true) must rebuild the graph, run backward and leave fresh gradients
// in every checked set; loss(false) only needs the forward value. Central
// differences are taken per coordinate of every set. The relative error
// denominator is floored to guard against cancellation noise on coordinates
// whose true gradient is ~0.
double finite_diff_check(const std::function<double(bool with_grad)>& loss,
                         std::span<ParamSet* const> params, double step,
                         double denom_floor = 1e-4);

double finite_diff_check(const std::function<double(bool with_grad)>& loss,
                         ParamSet& params, double step,
                         double denom_floor = 1e-4);

}  // namespace twopass

#endif  // TWOPASS_NN_HPP
