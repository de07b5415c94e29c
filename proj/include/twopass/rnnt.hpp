#ifndef TWOPASS_RNNT_HPP
#define TWOPASS_RNNT_HPP

#include <cstdint>

#include "twopass/data.hpp"
#include "twopass/nn.hpp"

namespace twopass {

// First-pass transducer decoder: embedding + LSTM prediction network,
// additive joint network with tanh hidden layer, softmax over the vocab
// including blank (id 0).
struct RnntConfig {
  int vocab_size = 19;
  int embed_dim = 16;
  int pred_layers = 1;
  int pred_hidden = 32;
  int pred_proj = 16;
  int joint_hidden = 32;
  int enc_dim = 16;  // must match the shared encoder's output dim

  void validate() const;
};

ParamSet init_rnnt_params(const RnntConfig& cfg, std::uint64_t seed);

// Token sequence with its search score. Scores coming out of the searches
// are log-probabilities (log-sum-exp over the alignment paths found).
struct Hypothesis {
  TokenSeq tokens;
  double log_prob = 0.0;
};

// Up to B hypotheses, log_prob descending, unique token sequences.
struct Beam {
  std::vector<Hypothesis> hyps;

  bool empty() const { return hyps.empty(); }
  std::size_t size() const { return hyps.size(); }
  const Hypothesis& top() const;
  void validate() const;  // sortedness + uniqueness
};

// Prediction network runner; states are tape nodes so they can be shared
// and extended hypothesis by hypothesis.
class PredNet {
 public:
  struct State {
    std::vector<LstmState> layers;
    NodeId out = kNoNode;  // projected output row
  };

  PredNet(Tape& tape, const RnntConfig& cfg, const BoundParams& params);

  // state after consuming only the start symbol (blank)
  State initial() const;
  State advance(const State& s, TokenId label) const;

 private:
  Tape* tape_;
  const RnntConfig* cfg_;
  const BoundParams* params_;
};

// 1 x vocab row of log p(k | enc_row, pred_out).
NodeId rnnt_joint_log_probs(Tape& tape, NodeId enc_row, NodeId pred_out,
                            const RnntConfig& cfg, const BoundParams& params);

// log p(k | t, u) for every frame t in [0,T') and prefix length u in [0,U],
// as a (T'*(U+1)) x vocab matrix with row index t*(U+1)+u.
NodeId rnnt_alignment_log_probs(Tape& tape, NodeId enc, const TokenSeq& y,
                                const RnntConfig& cfg,
                                const BoundParams& params);

// Exact transducer loss: -log of the total probability of y, summed over
// all monotonic blank-augmented alignments by a forward DP over the
// (T'+1) x (U+1) lattice in log space. Label emissions happen while frames
// remain (t < T'), so every complete alignment ends with the blank that
// consumes the final frame. Differentiable through the tape.
NodeId rnnt_loss(Tape& tape, NodeId enc, const TokenSeq& y,
                 const RnntConfig& cfg, const BoundParams& params);

struct BeamSearchConfig {
  int beam = 8;
  int max_symbols_per_frame = 4;
  TokenId first_label = 3;  // labels are [first_label, vocab); rest reserved
};

// Frame-synchronous transducer beam search. Hypotheses that reach the same
// token sequence are merged with log-sum-exp; pruning keeps the top `beam`
// entries of the combined frontier after every expansion round, which makes
// beam=1 coincide with greedy decoding. Ties break lexicographically.
Beam rnnt_beam_search(Tape& tape, NodeId enc, const RnntConfig& cfg,
                      const BoundParams& params, const BeamSearchConfig& bs);

// Argmax transducer decoding with the same per-frame symbol cap.
TokenSeq rnnt_greedy_decode(Tape& tape, NodeId enc, const RnntConfig& cfg,
                            const BoundParams& params,
                            const BeamSearchConfig& bs);

}  // namespace twopass

#endif  // TWOPASS_RNNT_HPP
