#include "twopass/rnnt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace twopass {

void RnntConfig::validate() const {
  if (vocab_size < 2) throw ValueError("rnnt config: vocab needs blank + labels");
  if (embed_dim < 1 || pred_layers < 1 || pred_hidden < 1 || pred_proj < 1 ||
      joint_hidden < 1 || enc_dim < 1) {
    throw ValueError("rnnt config: dims must be positive");
  }
}

ParamSet init_rnnt_params(const RnntConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet set;
  set.add("pred.embed", init_matrix(cfg.vocab_size, cfg.embed_dim, rng));
  int in_dim = cfg.embed_dim;
  for (int l = 0; l < cfg.pred_layers; ++l) {
    add_lstm_params(set, "pred.layer" + std::to_string(l), in_dim,
                    cfg.pred_hidden, rng);
    in_dim = cfg.pred_hidden;
  }
  add_affine_params(set, "pred.proj", cfg.pred_hidden, cfg.pred_proj, rng);
  add_affine_params(set, "joint.in", cfg.enc_dim + cfg.pred_proj,
                    cfg.joint_hidden, rng);
  add_affine_params(set, "joint.out", cfg.joint_hidden, cfg.vocab_size, rng);
  return set;
}

const Hypothesis& Beam::top() const {
  if (hyps.empty()) throw ValueError("beam: empty");
  return hyps.front();
}

void Beam::validate() const {
  for (std::size_t i = 1; i < hyps.size(); ++i) {
    if (hyps[i - 1].log_prob < hyps[i].log_prob) {
      throw ValueError("beam: not sorted by log_prob");
    }
  }
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    for (std::size_t j = i + 1; j < hyps.size(); ++j) {
      if (hyps[i].tokens == hyps[j].tokens) {
        throw ValueError("beam: duplicate token sequence");
      }
    }
  }
}

// ---- prediction network -----------------------------------------------------

PredNet::PredNet(Tape& tape, const RnntConfig& cfg, const BoundParams& params)
    : tape_(&tape), cfg_(&cfg), params_(&params) {}

PredNet::State PredNet::initial() const {
  State s;
  s.layers.reserve(static_cast<std::size_t>(cfg_->pred_layers));
  for (int l = 0; l < cfg_->pred_layers; ++l) {
    s.layers.push_back(lstm_zero_state(*tape_, 1, cfg_->pred_hidden));
  }
  // the start symbol is the blank
  return advance(s, Vocab::kBlank);
}

PredNet::State PredNet::advance(const State& s, TokenId label) const {
  if (label < 0 || label >= cfg_->vocab_size) {
    throw ValueError("prediction network: token " + std::to_string(label) +
                     " outside vocab");
  }
  Tape& tape = *tape_;
  NodeId x = tape.embedding_rows(params_->id("pred.embed"), {label});
  State next;
  next.layers.reserve(s.layers.size());
  for (int l = 0; l < cfg_->pred_layers; ++l) {
    const std::string prefix = "pred.layer" + std::to_string(l);
    LstmState ns = lstm_step(tape, x, s.layers[static_cast<std::size_t>(l)],
                             params_->id(prefix + ".w"),
                             params_->id(prefix + ".b"));
    next.layers.push_back(ns);
    x = ns.h;
  }
  next.out = affine_layer(tape, x, *params_, "pred.proj");
  return next;
}

// ---- joint network ------------------------------------------------------

NodeId rnnt_joint_log_probs(Tape& tape, NodeId enc_row, NodeId pred_out,
                            const RnntConfig& cfg, const BoundParams& params) {
  const NodeId parts[] = {enc_row, pred_out};
  NodeId h = tape.tanh(tape.affine(tape.concat_cols(parts),
                                   params.id("joint.in.w"),
                                   params.id("joint.in.b")));
  NodeId logits = affine_layer(tape, h, params, "joint.out");
  (void)cfg;
  return tape.log_softmax_rows(logits);
}

NodeId rnnt_alignment_log_probs(Tape& tape, NodeId enc, const TokenSeq& y,
                                const RnntConfig& cfg,
                                const BoundParams& params) {
  cfg.validate();
  if (tape.value(enc).cols() != cfg.enc_dim) {
    throw ShapeError("rnnt: encoding dim " +
                     std::to_string(tape.value(enc).cols()) +
                     " does not match joint input " +
                     std::to_string(cfg.enc_dim));
  }
  for (TokenId t : y) {
    if (t <= Vocab::kBlank || t >= cfg.vocab_size) {
      throw ValueError("rnnt: reference token " + std::to_string(t) +
                       " outside vocab");
    }
  }
  const int t_len = static_cast<int>(tape.value(enc).rows());
  const int u_len = static_cast<int>(y.size());

  // prediction outputs for prefix lengths 0..U
  PredNet pred(tape, cfg, params);
  PredNet::State state = pred.initial();
  std::vector<NodeId> pred_rows = {state.out};
  for (TokenId tok : y) {
    state = pred.advance(state, tok);
    pred_rows.push_back(state.out);
  }
  NodeId pred_mat = tape.concat_rows(pred_rows);  // (U+1) x pred_proj

  // all (t, u) pairs in one batch: row index t*(U+1)+u
  NodeId enc_rep = tape.repeat_each_row(enc, u_len + 1);
  NodeId pred_tile = tape.repeat_rows(pred_mat, t_len);
  const NodeId parts[] = {enc_rep, pred_tile};
  NodeId h = tape.tanh(tape.affine(tape.concat_cols(parts),
                                   params.id("joint.in.w"),
                                   params.id("joint.in.b")));
  NodeId logits = affine_layer(tape, h, params, "joint.out");
  return tape.log_softmax_rows(logits);
}

NodeId rnnt_loss(Tape& tape, NodeId enc, const TokenSeq& y,
                 const RnntConfig& cfg, const BoundParams& params) {
  const int t_len = static_cast<int>(tape.value(enc).rows());
  const int u_len = static_cast<int>(y.size());
  if (t_len < 1) throw ShapeError("rnnt_loss: empty encoding");

  NodeId logp = rnnt_alignment_log_probs(tape, enc, y, cfg, params);
  const auto row_of = [u_len](int t, int u) { return t * (u_len + 1) + u; };

  // alpha over the (T'+1) x (U+1) lattice; blank consumes frame t moving
  // (t,u)->(t+1,u), a label emits y[u] moving (t,u)->(t,u+1) while t < T'.
  std::vector<NodeId> alpha(static_cast<std::size_t>((t_len + 1) * (u_len + 1)),
                            kNoNode);
  const auto cell = [&](int t, int u) -> NodeId& {
    return alpha[static_cast<std::size_t>(t * (u_len + 1) + u)];
  };
  cell(0, 0) = tape.constant_scalar(0.0);
  for (int t = 0; t <= t_len; ++t) {
    for (int u = 0; u <= u_len; ++u) {
      if (t == 0 && u == 0) continue;
      NodeId from_blank = kNoNode;
      NodeId from_label = kNoNode;
      if (t > 0) {
        from_blank = tape.add(cell(t - 1, u),
                              tape.pick(logp, row_of(t - 1, u), Vocab::kBlank));
      }
      if (u > 0 && t < t_len) {
        from_label =
            tape.add(cell(t, u - 1),
                     tape.pick(logp, row_of(t, u - 1),
                               y[static_cast<std::size_t>(u - 1)]));
      }
      if (from_blank != kNoNode && from_label != kNoNode) {
        cell(t, u) = tape.logaddexp(from_blank, from_label);
      } else if (from_blank != kNoNode) {
        cell(t, u) = from_blank;
      } else if (from_label != kNoNode) {
        cell(t, u) = from_label;
      } else {
        // (0, u>0): unreachable without consuming a frame
        cell(t, u) = kNoNode;
      }
    }
  }
  NodeId goal = cell(t_len, u_len);
  if (goal == kNoNode) throw ValueError("rnnt_loss: unreachable lattice goal");
  return tape.scale(goal, -1.0);
}

// ---- beam search --------------------------------------------------------

namespace {

constexpr TokenId kNoPending = -1;

struct SearchHyp {
  TokenSeq tokens;
  double score = 0.0;
  PredNet::State state;      // prediction state, possibly one token behind
  TokenId pending = kNoPending;
  int emitted = 0;           // labels emitted in the current frame
  bool frozen = false;       // already took the blank for this frame
};

void materialize(const PredNet& pred, SearchHyp& h) {
  if (h.pending != kNoPending) {
    h.state = pred.advance(h.state, h.pending);
    h.pending = kNoPending;
  }
}

bool better(const SearchHyp& a, const SearchHyp& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.frozen && !b.frozen;
}

// merge identical (tokens, frozen) pairs with log-sum-exp
void merge_candidates(std::vector<SearchHyp>& cands) {
  std::map<std::pair<TokenSeq, bool>, std::size_t> seen;
  std::vector<SearchHyp> out;
  out.reserve(cands.size());
  for (SearchHyp& h : cands) {
    auto key = std::make_pair(h.tokens, h.frozen);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(std::move(key), out.size());
      out.push_back(std::move(h));
    } else {
      SearchHyp& kept = out[it->second];
      const double m = std::max(kept.score, h.score);
      kept.score =
          m + std::log(std::exp(kept.score - m) + std::exp(h.score - m));
      kept.emitted = std::min(kept.emitted, h.emitted);
    }
  }
  cands = std::move(out);
}

}  // namespace

Beam rnnt_beam_search(Tape& tape, NodeId enc, const RnntConfig& cfg,
                      const BoundParams& params, const BeamSearchConfig& bs) {
  cfg.validate();
  if (bs.beam < 1) throw ValueError("beam search: beam must be >= 1");
  if (bs.max_symbols_per_frame < 1) {
    throw ValueError("beam search: max_symbols_per_frame must be >= 1");
  }
  const int t_len = static_cast<int>(tape.value(enc).rows());
  PredNet pred(tape, cfg, params);

  std::vector<SearchHyp> frontier(1);
  frontier[0].state = pred.initial();

  for (int t = 0; t < t_len; ++t) {
    NodeId enc_row = tape.row(enc, t);
    for (SearchHyp& h : frontier) {
      h.frozen = false;
      h.emitted = 0;
    }
    bool any_active = true;
    while (any_active) {
      std::vector<SearchHyp> cands;
      for (SearchHyp& h : frontier) {
        if (h.frozen) {
          cands.push_back(std::move(h));
          continue;
        }
        materialize(pred, h);
        NodeId lp =
            rnnt_joint_log_probs(tape, enc_row, h.state.out, cfg, params);
        const Mat& p = tape.value(lp);
        SearchHyp blanked = h;
        blanked.score += p(0, Vocab::kBlank);
        blanked.frozen = true;
        cands.push_back(std::move(blanked));
        if (h.emitted < bs.max_symbols_per_frame) {
          for (TokenId k = bs.first_label; k < cfg.vocab_size; ++k) {
            SearchHyp ext = h;
            ext.tokens.push_back(k);
            ext.score += p(0, k);
            ext.pending = k;
            ext.emitted += 1;
            cands.push_back(std::move(ext));
          }
        }
      }
      merge_candidates(cands);
      std::sort(cands.begin(), cands.end(), better);
      if (static_cast<int>(cands.size()) > bs.beam) {
        cands.resize(static_cast<std::size_t>(bs.beam));
      }
      frontier = std::move(cands);
      any_active = false;
      for (const SearchHyp& h : frontier) {
        if (!h.frozen) any_active = true;
      }
    }
  }

  Beam beam;
  beam.hyps.reserve(frontier.size());
  for (const SearchHyp& h : frontier) {
    beam.hyps.push_back(Hypothesis{h.tokens, h.score});
  }
  std::sort(beam.hyps.begin(), beam.hyps.end(),
            [](const Hypothesis& a, const Hypothesis& b) {
              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
              return a.tokens < b.tokens;
            });
  beam.validate();
  return beam;
}

TokenSeq rnnt_greedy_decode(Tape& tape, NodeId enc, const RnntConfig& cfg,
                            const BoundParams& params,
                            const BeamSearchConfig& bs) {
  const int t_len = static_cast<int>(tape.value(enc).rows());
  PredNet pred(tape, cfg, params);
  PredNet::State state = pred.initial();
  TokenSeq tokens;
  for (int t = 0; t < t_len; ++t) {
    NodeId enc_row = tape.row(enc, t);
    int emitted = 0;
    while (true) {
      NodeId lp = rnnt_joint_log_probs(tape, enc_row, state.out, cfg, params);
      const Mat& p = tape.value(lp);
      TokenId best = Vocab::kBlank;
      Scalar best_score = p(0, Vocab::kBlank);
      for (TokenId k = bs.first_label; k < cfg.vocab_size; ++k) {
        if (p(0, k) > best_score) {
          best = k;
          best_score = p(0, k);
        }
      }
      if (best == Vocab::kBlank) break;
      tokens.push_back(best);
      state = pred.advance(state, best);
      if (++emitted >= bs.max_symbols_per_frame) break;
    }
  }
  return tokens;
}

}  // namespace twopass
