#ifndef TWOPASS_TRAINING_HPP
#define TWOPASS_TRAINING_HPP

#include <functional>
#include <span>

#include "twopass/second_pass.hpp"
#include "twopass/wer.hpp"

namespace twopass {

enum class TrainStage { kRnnt, kDelibCe, kMwer, kJoint };

std::string to_string(TrainStage stage);
TrainStage train_stage_from_string(const std::string& s);

enum class Optimizer { kSgd, kAdam };

std::string to_string(Optimizer opt);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
  TrainStage stage = TrainStage::kRnnt;
  int steps = 200;
  int batch = 4;
  double lr = 0.2;
  std::uint64_t seed = 1;
  double alpha = 0.01;   // CE weight inside the combined MWER loss
  double lambda = 1.0;   // CE weight of the joint loss
  int b_mwer = 4;        // second-pass beam during MWER training
  int num_hyps = 8;      // H for training-time hypothesis encoding
  AttentionMode mode = AttentionMode::kBoth;
  int threads = 1;
  int max_symbols_per_frame = 4;
  // global-norm gradient clip applied to the batch-mean gradient before the
  // update; 0 disables clipping
  double clip_norm = 0.0;
  // plain SGD stalls in the transducer blank-collapse plateau at the pinned
  // init scale, so Adam is available as well
  Optimizer optimizer = Optimizer::kSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct TrainLogRow {
  int step = 0;
  std::string stage;
  double loss = 0.0;
  long long wall_ms = 0;
};

// CSV: step,stage,loss,wall_ms with loss printed round-trip exact
std::string train_log_header();
std::string format_log_row(const TrainLogRow& row);

using LogSink = std::function<void(const TrainLogRow&)>;

// ---- losses --------------------------------------------------------------

// Expected word-error deviation over a beam: sum_i P(i) * (W_i - mean(W)),
// with P the softmax of the sequence log-probs. W_i are constants; the
// gradient flows through the log-probs only.
NodeId mwer_expected_error(Tape& tape, std::span<const NodeId> seq_log_probs,
                           std::span<const int> errors);

// L' = L_mwer + alpha * ce_loss
NodeId mwer_combined_loss(Tape& tape, std::span<const NodeId> seq_log_probs,
                          std::span<const int> errors, NodeId ce_loss,
                          double alpha);

// ---- per-utterance loss/gradient builders ---------------------------------
// Each builds a fresh tape, returns the loss value and, when with_grad is
// set, adds gradients into the grad buffers of the trainable groups. The
// search outputs (first-pass beam, MWER candidates) are inputs here so the
// same functions serve training and finite-difference checking.

double rnnt_utterance_loss(TwoPassModel& model, const Utterance& utt,
                           bool with_grad);

double delib_ce_utterance_loss(TwoPassModel& model, const Utterance& utt,
                               const Beam& first_pass, AttentionMode mode,
                               bool with_grad);

double mwer_utterance_loss(TwoPassModel& model, const Utterance& utt,
                           const Beam& first_pass,
                           const std::vector<TokenSeq>& candidates,
                           AttentionMode mode, double alpha, bool with_grad);

double joint_utterance_loss(TwoPassModel& model, const Utterance& utt,
                            const Beam& first_pass, AttentionMode mode,
                            double lambda, bool with_grad);

// First-pass beam used while training the second pass; runs on a throwaway
// tape with read-only parameters.
Beam training_first_pass(const TwoPassModel& model, const Utterance& utt,
                         int beam, int max_symbols_per_frame);

// Second-pass candidates for MWER training, regenerated every batch.
std::vector<TokenSeq> mwer_candidates(const TwoPassModel& model,
                                      const Utterance& utt,
                                      const Beam& first_pass,
                                      AttentionMode mode, int b_mwer);

// ---- the training loop ----------------------------------------------------

// Runs the configured stage over the corpus with plain SGD. Batch items are
// taken in corpus order with wraparound; per-utterance gradients are
// computed in parallel slots and reduced in index order, so results are
// identical at every thread count. Stages delib_ce and mwer leave the enc
// and rnnt groups byte-identical.
void train(TwoPassModel& model, const std::vector<Utterance>& corpus,
           const TrainConfig& cfg, const LogSink& log = {});

}  // namespace twopass

#endif  // TWOPASS_TRAINING_HPP
