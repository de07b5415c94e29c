#ifndef TWOPASS_DELIBERATION_HPP
#define TWOPASS_DELIBERATION_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twopass/rnnt.hpp"

namespace twopass {

enum class AttentionMode { kBoth, kAcousticsOnly, kTextOnly };

std::string to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& s);

// Second-pass decoder: per-hypothesis bidirectional encoding of the padded
// first-pass beam, an optional additional encoder over the acoustic
// encoding, two multi-head attention layers and an LSTM decoder. A disabled
// attention side contributes a zero context of the same width, so the
// decoder input layout is identical in every mode.
struct DeliberationConfig {
  int vocab_size = 19;
  int embed_dim = 16;   // shared by hypothesis encoder and decoder input
  int hyp_hidden = 32;  // per direction; h_b rows have 2*hyp_hidden
  int enc_dim = 16;     // dim of e; the additional encoder preserves it
  bool use_ae = false;
  int ae_layers = 2;
  int attn_dim = 16;    // context width of each attention; heads divide it
  int heads = 4;
  int dec_hidden = 32;
  int l_pad = 24;
  int num_hyps = 8;     // H

  int hyp_rows_dim() const { return 2 * hyp_hidden; }
  void validate() const;
};

ParamSet init_delib_params(const DeliberationConfig& cfg, std::uint64_t seed);

// ---- multi-head attention -------------------------------------------------

struct AttentionParams {
  NodeId wq = kNoNode;  // query_dim x attn_dim
  NodeId wk = kNoNode;  // source_dim x attn_dim
  NodeId wv = kNoNode;  // source_dim x attn_dim
  NodeId wo = kNoNode;  // attn_dim x attn_dim
};

// Key/value projections of a fixed source, computed once per decode.
struct PreparedAttention {
  AttentionParams params;
  std::vector<NodeId> keys;    // per head, S x head_dim
  std::vector<NodeId> values;  // per head, S x head_dim
  int heads = 0;
  int head_dim = 0;
};

struct AttentionResult {
  NodeId context = kNoNode;               // 1 x attn_dim
  NodeId weights = kNoNode;               // 1 x S, mean over heads
  std::vector<NodeId> head_weights;       // per head, 1 x S
};

PreparedAttention prepare_attention(Tape& tape, NodeId source,
                                    const AttentionParams& params, int heads);

// Scaled dot-product attention of one query row against the prepared source.
AttentionResult attend(Tape& tape, const PreparedAttention& prep, NodeId query);

// One-shot convenience around prepare_attention + attend.
AttentionResult multihead_attention(Tape& tape, NodeId query, NodeId source,
                                    const AttentionParams& params, int heads);

// ---- hypothesis encoding ----------------------------------------------------

struct HypothesisEncoding {
  NodeId rows = kNoNode;           // (H * l_pad) x 2*hyp_hidden
  std::vector<int> hyp_index;      // source hypothesis per row
  std::vector<TokenId> tokens;     // padded token per row
};

// Takes the top H hypotheses (duplicating the top-1 when the beam is
// short), pads each to l_pad with eos, embeds, runs the shared
// bidirectional encoder over each hypothesis independently and concatenates
// the outputs in time. Hypothesis i owns rows [i*l_pad, (i+1)*l_pad).
HypothesisEncoding encode_hypotheses(Tape& tape, const Beam& beam, int num_hyps,
                                     int l_pad, const DeliberationConfig& cfg,
                                     const BoundParams& delib);

// Unidirectional LSTM stack over e, preserving the time length and width;
// identity bypass when disabled.
NodeId additional_encode(Tape& tape, NodeId e, const DeliberationConfig& cfg,
                         const BoundParams& delib, bool enabled);

// ---- decoder ------------------------------------------------------------

struct DecodeStep {
  NodeId logits = kNoNode;  // 1 x vocab; blank and sos retired by masking
  LstmState state;
  NodeId weights_text = kNoNode;      // averaged over heads
  NodeId weights_acoustic = kNoNode;
  std::vector<NodeId> head_weights_text;
  std::vector<NodeId> head_weights_acoustic;
};

class DeliberationDecoder {
 public:
  DeliberationDecoder(Tape& tape, const DeliberationConfig& cfg,
                      const BoundParams& delib, NodeId e_prime,
                      const HypothesisEncoding& h_b, AttentionMode mode);

  LstmState initial_state() const;
  DecodeStep step(TokenId prev_token, const LstmState& state) const;

  // Teacher-forced sum of stepwise log probabilities; y must end with eos.
  NodeId sequence_log_prob(const TokenSeq& y) const;

  // Teacher-forced mean cross entropy against target (ending with eos).
  NodeId cross_entropy_loss(const TokenSeq& target) const;

  AttentionMode mode() const { return mode_; }
  const DeliberationConfig& config() const { return *cfg_; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  const DeliberationConfig* cfg_;
  const BoundParams* delib_;
  AttentionMode mode_;
  std::optional<PreparedAttention> text_;
  std::optional<PreparedAttention> acoustic_;
  NodeId zero_context_ = kNoNode;
};

}  // namespace twopass

#endif  // TWOPASS_DELIBERATION_HPP
