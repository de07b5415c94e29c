#include "twopass/deliberation.hpp"

#include <cmath>

namespace twopass {

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kBoth:
      return "both";
    case AttentionMode::kAcousticsOnly:
      return "acoustic";
    case AttentionMode::kTextOnly:
      return "text";
  }
  throw ValueError("unknown attention mode");
}

AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "both") return AttentionMode::kBoth;
  if (s == "acoustic" || s == "acoustics" || s == "acoustics_only") {
    return AttentionMode::kAcousticsOnly;
  }
  if (s == "text" || s == "text_only") return AttentionMode::kTextOnly;
  throw ValueError("unknown attention mode: " + s);
}

void DeliberationConfig::validate() const {
  if (vocab_size <= Vocab::kNumReserved) {
    throw ValueError("delib config: vocab too small");
  }
  if (embed_dim < 1 || hyp_hidden < 1 || enc_dim < 1 || attn_dim < 1 ||
      heads < 1 || dec_hidden < 1 || l_pad < 1 || num_hyps < 1) {
    throw ValueError("delib config: dims must be positive");
  }
  if (attn_dim % heads != 0) {
    throw ValueError("delib config: heads must divide attn_dim");
  }
  if (use_ae && ae_layers < 1) {
    throw ValueError("delib config: ae_layers must be >= 1 when AE is on");
  }
}

ParamSet init_delib_params(const DeliberationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet set;
  set.add("embed", init_matrix(cfg.vocab_size, cfg.embed_dim, rng));
  add_lstm_params(set, "hyp.fw", cfg.embed_dim, cfg.hyp_hidden, rng);
  add_lstm_params(set, "hyp.bw", cfg.embed_dim, cfg.hyp_hidden, rng);
  if (cfg.use_ae) {
    for (int l = 0; l < cfg.ae_layers; ++l) {
      add_lstm_params(set, "ae.layer" + std::to_string(l), cfg.enc_dim,
                      cfg.enc_dim, rng);
    }
  }
  const auto add_attention = [&](const std::string& side, int src_dim) {
    set.add("attn." + side + ".wq",
            init_matrix(cfg.dec_hidden, cfg.attn_dim, rng));
    set.add("attn." + side + ".wk", init_matrix(src_dim, cfg.attn_dim, rng));
    set.add("attn." + side + ".wv", init_matrix(src_dim, cfg.attn_dim, rng));
    set.add("attn." + side + ".wo", init_matrix(cfg.attn_dim, cfg.attn_dim, rng));
  };
  add_attention("text", cfg.hyp_rows_dim());
  add_attention("acoustic", cfg.enc_dim);
  add_lstm_params(set, "dec.lstm", cfg.embed_dim + 2 * cfg.attn_dim,
                  cfg.dec_hidden, rng);
  add_affine_params(set, "dec.out", cfg.dec_hidden, cfg.vocab_size, rng);
  return set;
}

// ---- multi-head attention -------------------------------------------------

PreparedAttention prepare_attention(Tape& tape, NodeId source,
                                    const AttentionParams& params, int heads) {
  const Mat& src = tape.value(source);
  if (src.rows() < 1) throw ShapeError("attention: empty source");
  const int attn_dim = static_cast<int>(tape.value(params.wk).cols());
  if (heads < 1 || attn_dim % heads != 0) {
    throw ValueError("attention: heads must divide the projection dim");
  }
  PreparedAttention prep;
  prep.params = params;
  prep.heads = heads;
  prep.head_dim = attn_dim / heads;
  NodeId k = tape.matmul(source, params.wk);
  NodeId v = tape.matmul(source, params.wv);
  for (int h = 0; h < heads; ++h) {
    prep.keys.push_back(tape.slice_cols(k, h * prep.head_dim, prep.head_dim));
    prep.values.push_back(tape.slice_cols(v, h * prep.head_dim, prep.head_dim));
  }
  return prep;
}

AttentionResult attend(Tape& tape, const PreparedAttention& prep,
                       NodeId query) {
  if (tape.value(query).rows() != 1) {
    throw ShapeError("attention: query must be a single row");
  }
  NodeId q = tape.matmul(query, prep.params.wq);
  const Scalar inv_scale = 1.0 / std::sqrt(static_cast<Scalar>(prep.head_dim));
  AttentionResult result;
  std::vector<NodeId> contexts;
  contexts.reserve(static_cast<std::size_t>(prep.heads));
  for (int h = 0; h < prep.heads; ++h) {
    NodeId qh = tape.slice_cols(q, h * prep.head_dim, prep.head_dim);
    NodeId scores = tape.scale(
        tape.matmul_nt(qh, prep.keys[static_cast<std::size_t>(h)]), inv_scale);
    NodeId w = tape.softmax_rows(scores);
    result.head_weights.push_back(w);
    contexts.push_back(
        tape.matmul(w, prep.values[static_cast<std::size_t>(h)]));
  }
  result.context = tape.matmul(tape.concat_cols(contexts), prep.params.wo);
  NodeId acc = result.head_weights[0];
  for (int h = 1; h < prep.heads; ++h) {
    acc = tape.add(acc, result.head_weights[static_cast<std::size_t>(h)]);
  }
  result.weights = tape.scale(acc, 1.0 / static_cast<Scalar>(prep.heads));
  return result;
}

AttentionResult multihead_attention(Tape& tape, NodeId query, NodeId source,
                                    const AttentionParams& params, int heads) {
  return attend(tape, prepare_attention(tape, source, params, heads), query);
}

// ---- hypothesis encoding ----------------------------------------------------

HypothesisEncoding encode_hypotheses(Tape& tape, const Beam& beam, int num_hyps,
                                     int l_pad, const DeliberationConfig& cfg,
                                     const BoundParams& delib) {
  if (beam.empty()) throw ValueError("encode_hypotheses: empty beam");
  if (num_hyps < 1) throw ValueError("encode_hypotheses: H must be >= 1");
  if (l_pad < 1) throw ValueError("encode_hypotheses: l_pad must be >= 1");

  std::vector<TokenSeq> padded;
  padded.reserve(static_cast<std::size_t>(num_hyps));
  for (int i = 0; i < num_hyps; ++i) {
    const Hypothesis& h =
        i < static_cast<int>(beam.size()) ? beam.hyps[static_cast<std::size_t>(i)]
                                          : beam.hyps.front();
    padded.push_back(pad_hypothesis(h.tokens, l_pad));
  }

  // Run all hypotheses through the shared encoder as one batch; the
  // recurrence is row-independent, so this matches per-hypothesis encoding.
  NodeId embed = delib.id("embed");
  std::vector<NodeId> steps;  // per position, H x embed_dim
  steps.reserve(static_cast<std::size_t>(l_pad));
  for (int t = 0; t < l_pad; ++t) {
    std::vector<int> ids(static_cast<std::size_t>(num_hyps));
    for (int i = 0; i < num_hyps; ++i) {
      ids[static_cast<std::size_t>(i)] =
          padded[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    }
    steps.push_back(tape.embedding_rows(embed, ids));
  }

  const NodeId fw_w = delib.id("hyp.fw.w");
  const NodeId fw_b = delib.id("hyp.fw.b");
  const NodeId bw_w = delib.id("hyp.bw.w");
  const NodeId bw_b = delib.id("hyp.bw.b");
  std::vector<NodeId> fw(static_cast<std::size_t>(l_pad));
  std::vector<NodeId> bw(static_cast<std::size_t>(l_pad));
  LstmState state = lstm_zero_state(tape, num_hyps, cfg.hyp_hidden);
  for (int t = 0; t < l_pad; ++t) {
    state = lstm_step(tape, steps[static_cast<std::size_t>(t)], state, fw_w, fw_b);
    fw[static_cast<std::size_t>(t)] = state.h;
  }
  state = lstm_zero_state(tape, num_hyps, cfg.hyp_hidden);
  for (int t = l_pad - 1; t >= 0; --t) {
    state = lstm_step(tape, steps[static_cast<std::size_t>(t)], state, bw_w, bw_b);
    bw[static_cast<std::size_t>(t)] = state.h;
  }

  HypothesisEncoding out;
  std::vector<NodeId> rows;
  rows.reserve(static_cast<std::size_t>(num_hyps) * l_pad);
  for (int i = 0; i < num_hyps; ++i) {
    for (int t = 0; t < l_pad; ++t) {
      const NodeId parts[] = {tape.row(fw[static_cast<std::size_t>(t)], i),
                              tape.row(bw[static_cast<std::size_t>(t)], i)};
      rows.push_back(tape.concat_cols(parts));
      out.hyp_index.push_back(i);
      out.tokens.push_back(
          padded[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]);
    }
  }
  out.rows = tape.concat_rows(rows);
  return out;
}

NodeId additional_encode(Tape& tape, NodeId e, const DeliberationConfig& cfg,
                         const BoundParams& delib, bool enabled) {
  if (!enabled) return e;
  if (!cfg.use_ae) {
    throw ValueError("additional_encode: model has no AE parameters");
  }
  const int t_len = static_cast<int>(tape.value(e).rows());
  NodeId x = e;
  for (int l = 0; l < cfg.ae_layers; ++l) {
    const std::string prefix = "ae.layer" + std::to_string(l);
    const NodeId w = delib.id(prefix + ".w");
    const NodeId b = delib.id(prefix + ".b");
    LstmState state = lstm_zero_state(tape, 1, cfg.enc_dim);
    std::vector<NodeId> outputs;
    outputs.reserve(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      state = lstm_step(tape, tape.row(x, t), state, w, b);
      outputs.push_back(state.h);
    }
    x = tape.concat_rows(outputs);
  }
  return x;
}

// ---- decoder ------------------------------------------------------------

DeliberationDecoder::DeliberationDecoder(Tape& tape,
                                         const DeliberationConfig& cfg,
                                         const BoundParams& delib,
                                         NodeId e_prime,
                                         const HypothesisEncoding& h_b,
                                         AttentionMode mode)
    : tape_(&tape), cfg_(&cfg), delib_(&delib), mode_(mode) {
  cfg.validate();
  const auto side = [&](const std::string& name) {
    AttentionParams p;
    p.wq = delib.id("attn." + name + ".wq");
    p.wk = delib.id("attn." + name + ".wk");
    p.wv = delib.id("attn." + name + ".wv");
    p.wo = delib.id("attn." + name + ".wo");
    return p;
  };
  if (mode != AttentionMode::kAcousticsOnly) {
    if (h_b.rows == kNoNode) {
      throw ValueError("deliberation decoder: text attention needs h_b");
    }
    text_ = prepare_attention(tape, h_b.rows, side("text"), cfg.heads);
  }
  if (mode != AttentionMode::kTextOnly) {
    if (e_prime == kNoNode) {
      throw ValueError("deliberation decoder: acoustic attention needs e'");
    }
    acoustic_ = prepare_attention(tape, e_prime, side("acoustic"), cfg.heads);
  }
  if (mode != AttentionMode::kBoth) {
    zero_context_ = tape.constant(Mat::Zero(1, cfg.attn_dim));
  }
}

LstmState DeliberationDecoder::initial_state() const {
  return lstm_zero_state(*tape_, 1, cfg_->dec_hidden);
}

DecodeStep DeliberationDecoder::step(TokenId prev_token,
                                     const LstmState& state) const {
  Tape& tape = *tape_;
  if (prev_token < 0 || prev_token >= cfg_->vocab_size) {
    throw ValueError("deliberation decoder: token " +
                     std::to_string(prev_token) + " outside vocab");
  }
  DecodeStep out;
  NodeId c_text = zero_context_;
  NodeId c_ac = zero_context_;
  if (text_) {
    AttentionResult r = attend(tape, *text_, state.h);
    c_text = r.context;
    out.weights_text = r.weights;
    out.head_weights_text = std::move(r.head_weights);
  }
  if (acoustic_) {
    AttentionResult r = attend(tape, *acoustic_, state.h);
    c_ac = r.context;
    out.weights_acoustic = r.weights;
    out.head_weights_acoustic = std::move(r.head_weights);
  }
  NodeId emb = tape.embedding_rows(delib_->id("embed"), {prev_token});
  const NodeId parts[] = {emb, c_text, c_ac};
  NodeId x = tape.concat_cols(parts);
  out.state = lstm_step(tape, x, state, delib_->id("dec.lstm.w"),
                        delib_->id("dec.lstm.b"));
  NodeId logits = tape.affine(out.state.h, delib_->id("dec.out.w"),
                              delib_->id("dec.out.b"));
  // blank and sos are never legal outputs of the second pass
  out.logits = tape.add_to_cols(logits, {Vocab::kBlank, Vocab::kSos}, -1e9);
  return out;
}

NodeId DeliberationDecoder::sequence_log_prob(const TokenSeq& y) const {
  if (y.empty() || y.back() != Vocab::kEos) {
    throw ValueError("sequence_log_prob: sequence must end with eos");
  }
  Tape& tape = *tape_;
  LstmState state = initial_state();
  TokenId prev = Vocab::kSos;
  NodeId total = kNoNode;
  for (TokenId tok : y) {
    DecodeStep s = step(prev, state);
    NodeId lp = tape.log_softmax_rows(s.logits);
    NodeId picked = tape.pick(lp, 0, tok);
    total = total == kNoNode ? picked : tape.add(total, picked);
    state = s.state;
    prev = tok;
  }
  return total;
}

NodeId DeliberationDecoder::cross_entropy_loss(const TokenSeq& target) const {
  if (target.empty() || target.back() != Vocab::kEos) {
    throw ValueError("cross_entropy_loss: target must end with eos");
  }
  Tape& tape = *tape_;
  LstmState state = initial_state();
  TokenId prev = Vocab::kSos;
  std::vector<NodeId> logit_rows;
  std::vector<int> targets;
  logit_rows.reserve(target.size());
  for (TokenId tok : target) {
    DecodeStep s = step(prev, state);
    logit_rows.push_back(s.logits);
    targets.push_back(tok);
    state = s.state;
    prev = tok;
  }
  return tape.cross_entropy(tape.concat_rows(logit_rows), targets);
}

}  // namespace twopass
