#include "twopass/encoder.hpp"

namespace twopass {

void EncoderConfig::validate() const {
  if (input_dim < 1 || layers < 1 || hidden < 1 || proj < 1) {
    throw ValueError("encoder config: dims must be positive");
  }
  if (reduce_after_layer < 0 || reduce_after_layer > layers) {
    throw ValueError("encoder config: reduce_after_layer outside [0, layers]");
  }
  if (reduce_factor < 1) {
    throw ValueError("encoder config: reduce_factor must be >= 1");
  }
}

ParamSet init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet set;
  int in_dim = cfg.input_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    add_lstm_params(set, prefix + ".lstm", in_dim, cfg.hidden, rng);
    add_affine_params(set, prefix + ".proj", cfg.hidden, cfg.proj, rng);
    in_dim = cfg.proj;
    if (cfg.reduce_after_layer == l + 1 && cfg.reduce_factor > 1) {
      in_dim *= cfg.reduce_factor;
    }
  }
  return set;
}

namespace {

// Runs one LSTM layer over the rows of x (time-major) and stacks the
// hidden states back into a T x hidden node.
NodeId run_lstm_over_rows(Tape& tape, NodeId x, NodeId w, NodeId b,
                          int hidden) {
  const int t_len = static_cast<int>(tape.value(x).rows());
  LstmState state = lstm_zero_state(tape, 1, hidden);
  std::vector<NodeId> outputs;
  outputs.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    state = lstm_step(tape, tape.row(x, t), state, w, b);
    outputs.push_back(state.h);
  }
  return tape.concat_rows(outputs);
}

}  // namespace

NodeId encode_audio(Tape& tape, NodeId frames, const EncoderConfig& cfg,
                    const BoundParams& enc) {
  cfg.validate();
  if (tape.value(frames).cols() != cfg.input_dim) {
    throw ShapeError("encode_audio: frames have dim " +
                     std::to_string(tape.value(frames).cols()) +
                     ", encoder expects " + std::to_string(cfg.input_dim));
  }
  NodeId x = frames;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    NodeId h = run_lstm_over_rows(tape, x, enc.id(prefix + ".lstm.w"),
                                  enc.id(prefix + ".lstm.b"), cfg.hidden);
    x = affine_layer(tape, h, enc, prefix + ".proj");
    if (cfg.reduce_after_layer == l + 1 && cfg.reduce_factor > 1) {
      x = tape.time_concat(x, cfg.reduce_factor);
    }
  }
  return x;
}

NodeId frames_node(Tape& tape, const FrameSequence& frames) {
  frames.validate();
  return tape.constant(frames.to_matrix());
}

}  // namespace twopass
