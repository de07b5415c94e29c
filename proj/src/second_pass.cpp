#include "twopass/second_pass.hpp"

#include <algorithm>

namespace twopass {

namespace {

struct SpHyp {
  TokenSeq tokens;
  double score = 0.0;
  LstmState state;
  TokenId prev = Vocab::kSos;
  bool finished = false;
  std::vector<NodeId> w_text;               // per-step averaged weights
  std::vector<NodeId> w_ac;
  std::vector<std::vector<NodeId>> h_text;  // per-step per-head weights
  std::vector<std::vector<NodeId>> h_ac;
};

double sort_key(const SpHyp& h, bool length_normalize) {
  if (!length_normalize) return h.score;
  return h.score / static_cast<double>(h.tokens.size() + 1);
}

void record_step(SpHyp& h, const DecodeStep& s) {
  h.w_text.push_back(s.weights_text);
  h.w_ac.push_back(s.weights_acoustic);
  h.h_text.push_back(s.head_weights_text);
  h.h_ac.push_back(s.head_weights_acoustic);
}

AttentionTrace assemble_trace(const Tape& tape,
                              const std::vector<NodeId>& steps,
                              const std::vector<std::vector<NodeId>>& heads) {
  AttentionTrace trace;
  if (steps.empty() || steps.front() == kNoNode) return trace;
  const Eigen::Index s = tape.value(steps.front()).cols();
  trace.averaged.resize(static_cast<Eigen::Index>(steps.size()), s);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    trace.averaged.row(static_cast<Eigen::Index>(i)) = tape.value(steps[i]);
  }
  if (!heads.empty() && !heads.front().empty()) {
    const std::size_t n_heads = heads.front().size();
    trace.per_head.resize(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      trace.per_head[h].resize(static_cast<Eigen::Index>(steps.size()), s);
      for (std::size_t i = 0; i < heads.size(); ++i) {
        trace.per_head[h].row(static_cast<Eigen::Index>(i)) =
            tape.value(heads[i][h]);
      }
    }
  }
  return trace;
}

}  // namespace

SecondPassSearchOut second_pass_search(const DeliberationDecoder& decoder,
                                       int b2, int len_cap,
                                       bool length_normalize) {
  if (b2 < 1) throw ValueError("second pass: beam must be >= 1");
  if (len_cap < 1) throw ValueError("second pass: length cap must be >= 1");
  Tape& tape = decoder.tape();
  const DeliberationConfig& cfg = decoder.config();

  std::vector<SpHyp> frontier(1);
  frontier[0].state = decoder.initial_state();

  const auto by_score = [length_normalize](const SpHyp& a, const SpHyp& b) {
    const double ka = sort_key(a, length_normalize);
    const double kb = sort_key(b, length_normalize);
    if (ka != kb) return ka > kb;
    return a.tokens < b.tokens;
  };

  // Finished hypotheses compete with live ones for the beam slots, so a
  // width of 1 follows the greedy argmax path exactly. Whatever is still
  // live at the length cap is closed with a forced eos step.
  for (int depth = 0; depth <= len_cap; ++depth) {
    bool any_active = false;
    for (const SpHyp& h : frontier) {
      if (!h.finished) any_active = true;
    }
    if (!any_active) break;
    std::vector<SpHyp> cands;
    for (SpHyp& h : frontier) {
      if (h.finished) {
        cands.push_back(std::move(h));
        continue;
      }
      DecodeStep s = decoder.step(h.prev, h.state);
      NodeId lp = tape.log_softmax_rows(s.logits);
      const Mat& p = tape.value(lp);
      SpHyp done = h;
      done.score += p(0, Vocab::kEos);
      done.finished = true;
      record_step(done, s);
      cands.push_back(std::move(done));
      if (depth < len_cap) {
        for (TokenId k = Vocab::kNumReserved; k < cfg.vocab_size; ++k) {
          SpHyp ext = h;
          ext.tokens.push_back(k);
          ext.score += p(0, k);
          ext.state = s.state;
          ext.prev = k;
          record_step(ext, s);
          cands.push_back(std::move(ext));
        }
      }
    }
    std::sort(cands.begin(), cands.end(), by_score);
    if (static_cast<int>(cands.size()) > b2) {
      cands.resize(static_cast<std::size_t>(b2));
    }
    frontier = std::move(cands);
  }

  SecondPassSearchOut out;
  out.beam.hyps.reserve(frontier.size());
  for (const SpHyp& h : frontier) {
    out.beam.hyps.push_back(Hypothesis{h.tokens, h.score});
  }
  out.beam.validate();
  if (!frontier.empty()) {
    const SpHyp& top = frontier.front();
    out.text_attention = assemble_trace(tape, top.w_text, top.h_text);
    out.acoustic_attention = assemble_trace(tape, top.w_ac, top.h_ac);
    out.top_labels = top.tokens;
    out.top_labels.push_back(Vocab::kEos);
  }
  return out;
}

Beam rescore_beam(const DeliberationDecoder& decoder, const Beam& first_pass) {
  if (first_pass.empty()) throw ValueError("rescore: empty first-pass beam");
  Tape& tape = decoder.tape();
  Beam out;
  out.hyps.reserve(first_pass.size());
  for (const Hypothesis& h : first_pass.hyps) {
    TokenSeq y = h.tokens;
    y.push_back(Vocab::kEos);
    const double score = tape.scalar_value(decoder.sequence_log_prob(y));
    out.hyps.push_back(Hypothesis{h.tokens, score});
  }
  std::sort(out.hyps.begin(), out.hyps.end(),
            [](const Hypothesis& a, const Hypothesis& b) {
              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
              return a.tokens < b.tokens;
            });
  out.validate();
  return out;
}

namespace {

struct PreparedSecondPass {
  Beam first_pass;
  std::vector<TokenId> hb_tokens;
  DeliberationDecoder decoder;
};

PreparedSecondPass prepare(Tape& tape, const TwoPassModel& model,
                           const FrameSequence& frames,
                           const TwoPassDecodeConfig& cfg,
                           const BoundParams& enc, const BoundParams& rnnt,
                           const BoundParams& delib) {
  model.validate();
  if (!model.has_delib) {
    throw ValueError("two-pass decode: model has no deliberation parameters");
  }
  if (cfg.use_ae && !model.delib_cfg.use_ae) {
    throw ValueError("two-pass decode: AE requested but not in checkpoint");
  }
  NodeId e = encode_utterance(tape, model, frames, enc);
  BeamSearchConfig bs;
  bs.beam = cfg.b1;
  bs.max_symbols_per_frame = cfg.max_symbols_per_frame;
  bs.first_label = Vocab::kNumReserved;
  Beam first = rnnt_beam_search(tape, e, model.rnnt_cfg, rnnt, bs);

  HypothesisEncoding h_b =
      encode_hypotheses(tape, first, cfg.num_hyps, model.delib_cfg.l_pad,
                        model.delib_cfg, delib);
  NodeId e_prime =
      additional_encode(tape, e, model.delib_cfg, delib, cfg.use_ae);
  DeliberationDecoder decoder(tape, model.delib_cfg, delib, e_prime, h_b,
                              cfg.mode);
  return PreparedSecondPass{std::move(first), std::move(h_b.tokens),
                            std::move(decoder)};
}

}  // namespace

TwoPassResult decode_two_pass(const TwoPassModel& model,
                              const FrameSequence& frames,
                              const TwoPassDecodeConfig& cfg) {
  Tape tape;
  BoundParams enc = bind_const(tape, model.enc);
  BoundParams rnnt = bind_const(tape, model.rnnt);
  BoundParams delib = bind_const(tape, model.delib);
  PreparedSecondPass prep = prepare(tape, model, frames, cfg, enc, rnnt, delib);
  SecondPassSearchOut search = second_pass_search(
      prep.decoder, cfg.b2, cfg.effective_len_cap(model.delib_cfg.l_pad),
      cfg.length_normalize);
  TwoPassResult out;
  out.first_pass = std::move(prep.first_pass);
  out.second_pass = std::move(search.beam);
  out.text_attention = std::move(search.text_attention);
  out.acoustic_attention = std::move(search.acoustic_attention);
  out.hb_tokens = std::move(prep.hb_tokens);
  out.top_labels = std::move(search.top_labels);
  return out;
}

RescoreResult rescore_first_pass(const TwoPassModel& model,
                                 const FrameSequence& frames,
                                 const TwoPassDecodeConfig& cfg) {
  Tape tape;
  BoundParams enc = bind_const(tape, model.enc);
  BoundParams rnnt = bind_const(tape, model.rnnt);
  BoundParams delib = bind_const(tape, model.delib);
  PreparedSecondPass prep = prepare(tape, model, frames, cfg, enc, rnnt, delib);
  RescoreResult out;
  out.rescored = rescore_beam(prep.decoder, prep.first_pass);
  out.first_pass = std::move(prep.first_pass);
  return out;
}

}  // namespace twopass
