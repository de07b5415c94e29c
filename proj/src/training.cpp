#include "twopass/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "twopass/parallel.hpp"

namespace twopass {

std::string to_string(TrainStage stage) {
  switch (stage) {
    case TrainStage::kRnnt:
      return "rnnt";
    case TrainStage::kDelibCe:
      return "delib-ce";
    case TrainStage::kMwer:
      return "mwer";
    case TrainStage::kJoint:
      return "joint";
  }
  throw ValueError("unknown train stage");
}

TrainStage train_stage_from_string(const std::string& s) {
  if (s == "rnnt") return TrainStage::kRnnt;
  if (s == "delib-ce" || s == "delib_ce") return TrainStage::kDelibCe;
  if (s == "mwer") return TrainStage::kMwer;
  if (s == "joint") return TrainStage::kJoint;
  throw ValueError("unknown train stage: " + s);
}

std::string to_string(Optimizer opt) {
  switch (opt) {
    case Optimizer::kSgd:
      return "sgd";
    case Optimizer::kAdam:
      return "adam";
  }
  throw ValueError("unknown optimizer");
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adam") return Optimizer::kAdam;
  throw ValueError("unknown optimizer: " + s);
}

void TrainConfig::validate() const {
  if (steps < 1) throw ValueError("train config: steps must be >= 1");
  if (batch < 1) throw ValueError("train config: batch must be >= 1");
  if (lr <= 0.0) throw ValueError("train config: lr must be > 0");
  if (alpha < 0.0) throw ValueError("train config: alpha must be >= 0");
  if (lambda < 0.0) throw ValueError("train config: lambda must be >= 0");
  if (stage == TrainStage::kMwer && b_mwer < 2) {
    throw ValueError("train config: MWER needs a beam of at least 2");
  }
  if (clip_norm < 0.0) throw ValueError("train config: clip_norm must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ValueError("train config: betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ValueError("train config: adam_eps must be > 0");
  if (num_hyps < 1) throw ValueError("train config: num_hyps must be >= 1");
  if (threads < 1) throw ValueError("train config: threads must be >= 1");
}

std::string train_log_header() { return "step,stage,loss,wall_ms"; }

std::string format_log_row(const TrainLogRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%lld", row.step,
                row.stage.c_str(), row.loss, row.wall_ms);
  return std::string(buf);
}

// ---- losses --------------------------------------------------------------

NodeId mwer_expected_error(Tape& tape, std::span<const NodeId> seq_log_probs,
                           std::span<const int> errors) {
  if (seq_log_probs.size() < 2) {
    throw ValueError("mwer: needs at least two hypotheses");
  }
  if (seq_log_probs.size() != errors.size()) {
    throw ValueError("mwer: hypothesis and error counts disagree");
  }
  const std::size_t b = seq_log_probs.size();
  double mean_err = 0.0;
  for (int w : errors) {
    if (w < 0) throw ValueError("mwer: negative word-error count");
    mean_err += static_cast<double>(w);
  }
  mean_err /= static_cast<double>(b);
  Mat deviation(1, static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < b; ++i) {
    deviation(0, static_cast<Eigen::Index>(i)) =
        static_cast<double>(errors[i]) - mean_err;
  }
  NodeId scores = tape.concat_cols(seq_log_probs);
  NodeId probs = tape.softmax_rows(scores);
  return tape.sum(tape.mul(probs, tape.constant(std::move(deviation))));
}

NodeId mwer_combined_loss(Tape& tape, std::span<const NodeId> seq_log_probs,
                          std::span<const int> errors, NodeId ce_loss,
                          double alpha) {
  NodeId mwer = mwer_expected_error(tape, seq_log_probs, errors);
  if (alpha == 0.0) return mwer;
  return tape.add(mwer, tape.scale(ce_loss, alpha));
}

// ---- per-utterance loss/gradient builders ---------------------------------

namespace {

TokenSeq with_eos(const TokenSeq& tokens) {
  TokenSeq out = tokens;
  out.push_back(Vocab::kEos);
  return out;
}

// Encoder output values computed on a throwaway tape; used when the
// encoder is frozen for the stage.
Mat encoder_output_values(const TwoPassModel& model, const Utterance& utt) {
  Tape tape;
  BoundParams enc = bind_const(tape, model.enc);
  return tape.value(encode_utterance(tape, model, utt.frames, enc));
}

}  // namespace

Beam training_first_pass(const TwoPassModel& model, const Utterance& utt,
                         int beam, int max_symbols_per_frame) {
  Tape tape;
  BoundParams enc = bind_const(tape, model.enc);
  BoundParams rnnt = bind_const(tape, model.rnnt);
  NodeId e = encode_utterance(tape, model, utt.frames, enc);
  BeamSearchConfig bs;
  bs.beam = beam;
  bs.max_symbols_per_frame = max_symbols_per_frame;
  bs.first_label = Vocab::kNumReserved;
  return rnnt_beam_search(tape, e, model.rnnt_cfg, rnnt, bs);
}

std::vector<TokenSeq> mwer_candidates(const TwoPassModel& model,
                                      const Utterance& utt,
                                      const Beam& first_pass,
                                      AttentionMode mode, int b_mwer) {
  Tape tape;
  BoundParams delib = bind_const(tape, model.delib);
  NodeId e = tape.constant(encoder_output_values(model, utt));
  HypothesisEncoding h_b =
      encode_hypotheses(tape, first_pass, model.delib_cfg.num_hyps,
                        model.delib_cfg.l_pad, model.delib_cfg, delib);
  NodeId e_prime =
      additional_encode(tape, e, model.delib_cfg, delib, model.delib_cfg.use_ae);
  DeliberationDecoder decoder(tape, model.delib_cfg, delib, e_prime, h_b, mode);
  SecondPassSearchOut out =
      second_pass_search(decoder, b_mwer, 2 * model.delib_cfg.l_pad);
  std::vector<TokenSeq> candidates;
  candidates.reserve(out.beam.size());
  for (const Hypothesis& h : out.beam.hyps) candidates.push_back(h.tokens);
  return candidates;
}

double rnnt_utterance_loss(TwoPassModel& model, const Utterance& utt,
                           bool with_grad) {
  Tape tape;
  BoundParams enc = bind(tape, model.enc);
  BoundParams rnnt = bind(tape, model.rnnt);
  NodeId e = encode_utterance(tape, model, utt.frames, enc);
  NodeId loss = rnnt_loss(tape, e, utt.reference, model.rnnt_cfg, rnnt);
  const double value = tape.scalar_value(loss);
  if (with_grad) {
    tape.backward(loss);
    accumulate_grads(enc);
    accumulate_grads(rnnt);
  }
  return value;
}

double delib_ce_utterance_loss(TwoPassModel& model, const Utterance& utt,
                               const Beam& first_pass, AttentionMode mode,
                               bool with_grad) {
  Tape tape;
  BoundParams delib = bind(tape, model.delib);
  NodeId e = tape.constant(encoder_output_values(model, utt));
  HypothesisEncoding h_b =
      encode_hypotheses(tape, first_pass, model.delib_cfg.num_hyps,
                        model.delib_cfg.l_pad, model.delib_cfg, delib);
  NodeId e_prime =
      additional_encode(tape, e, model.delib_cfg, delib, model.delib_cfg.use_ae);
  DeliberationDecoder decoder(tape, model.delib_cfg, delib, e_prime, h_b, mode);
  NodeId loss = decoder.cross_entropy_loss(with_eos(utt.reference));
  const double value = tape.scalar_value(loss);
  if (with_grad) {
    tape.backward(loss);
    accumulate_grads(delib);
  }
  return value;
}

double mwer_utterance_loss(TwoPassModel& model, const Utterance& utt,
                           const Beam& first_pass,
                           const std::vector<TokenSeq>& candidates,
                           AttentionMode mode, double alpha, bool with_grad) {
  if (candidates.size() < 2) {
    throw ValueError("mwer: needs at least two second-pass candidates");
  }
  Tape tape;
  BoundParams delib = bind(tape, model.delib);
  NodeId e = tape.constant(encoder_output_values(model, utt));
  HypothesisEncoding h_b =
      encode_hypotheses(tape, first_pass, model.delib_cfg.num_hyps,
                        model.delib_cfg.l_pad, model.delib_cfg, delib);
  NodeId e_prime =
      additional_encode(tape, e, model.delib_cfg, delib, model.delib_cfg.use_ae);
  DeliberationDecoder decoder(tape, model.delib_cfg, delib, e_prime, h_b, mode);
  std::vector<NodeId> scores;
  std::vector<int> errors;
  scores.reserve(candidates.size());
  errors.reserve(candidates.size());
  for (const TokenSeq& cand : candidates) {
    scores.push_back(decoder.sequence_log_prob(with_eos(cand)));
    errors.push_back(word_errors(cand, utt.reference));
  }
  NodeId ce = decoder.cross_entropy_loss(with_eos(utt.reference));
  NodeId loss = mwer_combined_loss(tape, scores, errors, ce, alpha);
  const double value = tape.scalar_value(loss);
  if (with_grad) {
    tape.backward(loss);
    accumulate_grads(delib);
  }
  return value;
}

double joint_utterance_loss(TwoPassModel& model, const Utterance& utt,
                            const Beam& first_pass, AttentionMode mode,
                            double lambda, bool with_grad) {
  Tape tape;
  BoundParams enc = bind(tape, model.enc);
  BoundParams rnnt = bind(tape, model.rnnt);
  NodeId e = encode_utterance(tape, model, utt.frames, enc);
  NodeId loss = rnnt_loss(tape, e, utt.reference, model.rnnt_cfg, rnnt);
  BoundParams delib;
  const bool with_delib = lambda != 0.0;
  if (with_delib) {
    delib = bind(tape, model.delib);
    HypothesisEncoding h_b =
        encode_hypotheses(tape, first_pass, model.delib_cfg.num_hyps,
                          model.delib_cfg.l_pad, model.delib_cfg, delib);
    NodeId e_prime = additional_encode(tape, e, model.delib_cfg, delib,
                                       model.delib_cfg.use_ae);
    DeliberationDecoder decoder(tape, model.delib_cfg, delib, e_prime, h_b,
                                mode);
    NodeId ce = decoder.cross_entropy_loss(with_eos(utt.reference));
    loss = tape.add(loss, tape.scale(ce, lambda));
  }
  const double value = tape.scalar_value(loss);
  if (with_grad) {
    tape.backward(loss);
    accumulate_grads(enc);
    accumulate_grads(rnnt);
    if (with_delib) accumulate_grads(delib);
  }
  return value;
}

// ---- the training loop ----------------------------------------------------

namespace {

struct SlotGrads {
  double loss = 0.0;
  std::vector<Mat> enc;
  std::vector<Mat> rnnt;
  std::vector<Mat> delib;
};

std::vector<Mat> take_grads(ParamSet& set) {
  std::vector<Mat> out;
  out.reserve(set.items.size());
  for (ParamSet::Entry& e : set.items) out.push_back(*e.t.grad);
  return out;
}

void add_into(ParamSet& set, const std::vector<Mat>& grads) {
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    *set.items[i].t.grad += grads[i];
  }
}

void sgd_update(ParamSet& set, double scale) {
  for (ParamSet::Entry& e : set.items) {
    e.t.values -= scale * (*e.t.grad);
    check_finite(e.t.values, "updated parameters");
  }
}

// first/second moment buffers of one parameter group
struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;

  void init(const ParamSet& set) {
    for (const ParamSet::Entry& e : set.items) {
      m.push_back(Mat::Zero(e.t.values.rows(), e.t.values.cols()));
      v.push_back(Mat::Zero(e.t.values.rows(), e.t.values.cols()));
    }
  }
};

void adam_update(ParamSet& set, AdamState& state, const TrainConfig& cfg,
                 double grad_scale, int step) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, step + 1);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step + 1);
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    Tensor& t = set.items[i].t;
    Mat g = grad_scale * (*t.grad);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] =
        cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    Mat mhat = state.m[i] / bc1;
    Mat vhat = state.v[i] / bc2;
    t.values.array() -=
        cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.adam_eps);
    check_finite(t.values, "updated parameters");
  }
}

}  // namespace

void train(TwoPassModel& model, const std::vector<Utterance>& corpus,
           const TrainConfig& cfg, const LogSink& log) {
  cfg.validate();
  model.validate();
  if (corpus.empty()) throw ValueError("train: empty corpus");
  const bool needs_delib = cfg.stage != TrainStage::kRnnt;
  if (needs_delib && !model.has_delib) {
    throw ValueError("train: stage " + to_string(cfg.stage) +
                     " needs deliberation parameters in the checkpoint");
  }

  AdamState adam_enc, adam_rnnt, adam_delib;
  if (cfg.optimizer == Optimizer::kAdam) {
    adam_enc.init(model.enc);
    adam_rnnt.init(model.rnnt);
    if (model.has_delib) adam_delib.init(model.delib);
  }

  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<const Utterance*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch));
    for (int j = 0; j < cfg.batch; ++j) {
      const std::size_t idx =
          (static_cast<std::size_t>(step) * cfg.batch + j) % corpus.size();
      batch.push_back(&corpus[idx]);
    }

    std::vector<SlotGrads> slots(batch.size());
    parallel_for(static_cast<std::int64_t>(batch.size()), cfg.threads,
                 [&](std::int64_t j) {
      const Utterance& utt = *batch[static_cast<std::size_t>(j)];
      // Each slot works on a private copy so grads never race.
      TwoPassModel local = model;
      local.enc.zero_grads();
      local.rnnt.zero_grads();
      if (local.has_delib) local.delib.zero_grads();
      SlotGrads& slot = slots[static_cast<std::size_t>(j)];
      switch (cfg.stage) {
        case TrainStage::kRnnt: {
          slot.loss = rnnt_utterance_loss(local, utt, true);
          slot.enc = take_grads(local.enc);
          slot.rnnt = take_grads(local.rnnt);
          break;
        }
        case TrainStage::kDelibCe: {
          Beam beam = training_first_pass(local, utt, cfg.num_hyps,
                                          cfg.max_symbols_per_frame);
          slot.loss =
              delib_ce_utterance_loss(local, utt, beam, cfg.mode, true);
          slot.delib = take_grads(local.delib);
          break;
        }
        case TrainStage::kMwer: {
          Beam beam = training_first_pass(local, utt, cfg.num_hyps,
                                          cfg.max_symbols_per_frame);
          std::vector<TokenSeq> cands =
              mwer_candidates(local, utt, beam, cfg.mode, cfg.b_mwer);
          slot.loss = mwer_utterance_loss(local, utt, beam, cands, cfg.mode,
                                          cfg.alpha, true);
          slot.delib = take_grads(local.delib);
          break;
        }
        case TrainStage::kJoint: {
          Beam beam;
          if (cfg.lambda != 0.0) {
            beam = training_first_pass(local, utt, cfg.num_hyps,
                                       cfg.max_symbols_per_frame);
          }
          slot.loss = joint_utterance_loss(local, utt, beam, cfg.mode,
                                           cfg.lambda, true);
          slot.enc = take_grads(local.enc);
          slot.rnnt = take_grads(local.rnnt);
          if (cfg.lambda != 0.0) slot.delib = take_grads(local.delib);
          break;
        }
      }
    });

    // fixed-order reduction, then one SGD step on the trainable groups
    model.enc.zero_grads();
    model.rnnt.zero_grads();
    if (model.has_delib) model.delib.zero_grads();
    double loss_sum = 0.0;
    for (const SlotGrads& slot : slots) {
      loss_sum += slot.loss;
      if (!slot.enc.empty()) add_into(model.enc, slot.enc);
      if (!slot.rnnt.empty()) add_into(model.rnnt, slot.rnnt);
      if (!slot.delib.empty()) add_into(model.delib, slot.delib);
    }
    const bool first_pass_trained =
        cfg.stage == TrainStage::kRnnt || cfg.stage == TrainStage::kJoint;
    const bool second_pass_trained =
        cfg.stage == TrainStage::kDelibCe || cfg.stage == TrainStage::kMwer ||
        (cfg.stage == TrainStage::kJoint && cfg.lambda != 0.0);

    // batch-mean gradient, optionally clipped by its global norm
    double grad_scale = 1.0 / static_cast<double>(cfg.batch);
    if (cfg.clip_norm > 0.0) {
      double norm2 = 0.0;
      const auto accumulate_norm = [&](const ParamSet& set) {
        for (const ParamSet::Entry& e : set.items) {
          norm2 += e.t.grad->squaredNorm();
        }
      };
      if (first_pass_trained) {
        accumulate_norm(model.enc);
        accumulate_norm(model.rnnt);
      }
      if (second_pass_trained) accumulate_norm(model.delib);
      const double norm = std::sqrt(norm2) / static_cast<double>(cfg.batch);
      if (norm > cfg.clip_norm) grad_scale *= cfg.clip_norm / norm;
    }

    if (cfg.optimizer == Optimizer::kSgd) {
      const double scale = cfg.lr * grad_scale;
      if (first_pass_trained) {
        sgd_update(model.enc, scale);
        sgd_update(model.rnnt, scale);
      }
      if (second_pass_trained) sgd_update(model.delib, scale);
    } else {
      if (first_pass_trained) {
        adam_update(model.enc, adam_enc, cfg, grad_scale, step);
        adam_update(model.rnnt, adam_rnnt, cfg, grad_scale, step);
      }
      if (second_pass_trained) {
        adam_update(model.delib, adam_delib, cfg, grad_scale, step);
      }
    }

    if (log) {
      const auto t1 = std::chrono::steady_clock::now();
      TrainLogRow row;
      row.step = step;
      row.stage = to_string(cfg.stage);
      row.loss = loss_sum / static_cast<double>(cfg.batch);
      row.wall_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0)
              .count();
      log(row);
    }
  }
}

}  // namespace twopass
