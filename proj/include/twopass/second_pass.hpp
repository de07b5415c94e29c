#ifndef TWOPASS_SECOND_PASS_HPP
#define TWOPASS_SECOND_PASS_HPP

#include "twopass/model.hpp"

namespace twopass {

struct TwoPassDecodeConfig {
  int b1 = 8;             // first-pass beam
  int b2 = 8;             // second-pass beam
  int num_hyps = 8;       // H hypotheses fed to the text attention
  AttentionMode mode = AttentionMode::kBoth;
  bool use_ae = false;    // runtime toggle; needs AE parameters when on
  int len_cap = 0;        // 0 = 2 * l_pad
  int max_symbols_per_frame = 4;
  bool length_normalize = false;  // divide scores by token count when sorting

  int effective_len_cap(int l_pad) const {
    return len_cap > 0 ? len_cap : 2 * l_pad;
  }
};

// Attention probabilities collected over the decode steps of one
// hypothesis: one row per emitted token (final row is the eos step).
struct AttentionTrace {
  Mat averaged;               // steps x S
  std::vector<Mat> per_head;  // heads entries of the same dims

  bool empty() const { return averaged.size() == 0; }
};

struct TwoPassResult {
  Beam first_pass;
  Beam second_pass;                  // tokens exclude eos; scores include it
  AttentionTrace text_attention;     // traces of the top second-pass hypothesis
  AttentionTrace acoustic_attention;
  std::vector<TokenId> hb_tokens;    // padded token per h_b row
  TokenSeq top_labels;               // top-1 tokens plus terminal eos
};

struct RescoreResult {
  Beam first_pass;
  Beam rescored;  // same token sequences, teacher-forced scores, re-sorted
};

// Label-synchronous beam search over a prepared deliberation decoder.
// Hypotheses end on eos; anything still active at len_cap is closed with a
// forced eos step. Ties break lexicographically on token ids.
struct SecondPassSearchOut {
  Beam beam;
  AttentionTrace text_attention;
  AttentionTrace acoustic_attention;
  TokenSeq top_labels;
};
SecondPassSearchOut second_pass_search(const DeliberationDecoder& decoder,
                                       int b2, int len_cap,
                                       bool length_normalize = false);

// Scores every hypothesis of `first_pass` by teacher-forced sequence
// log-probability and re-sorts; the token multiset is unchanged.
Beam rescore_beam(const DeliberationDecoder& decoder, const Beam& first_pass);

// Full pipeline: frontend, shared encoder, first-pass search, hypothesis
// encoding, optional AE, second-pass search.
TwoPassResult decode_two_pass(const TwoPassModel& model,
                              const FrameSequence& frames,
                              const TwoPassDecodeConfig& cfg);

// Full pipeline with teacher-forced rescoring instead of the second search.
RescoreResult rescore_first_pass(const TwoPassModel& model,
                                 const FrameSequence& frames,
                                 const TwoPassDecodeConfig& cfg);

}  // namespace twopass

#endif  // TWOPASS_SECOND_PASS_HPP
