#ifndef TWOPASS_ENCODER_HPP
#define TWOPASS_ENCODER_HPP

#include <cstdint>

#include "twopass/data.hpp"
#include "twopass/nn.hpp"

namespace twopass {

// Shared acoustic encoder: a stack of unidirectional LSTM layers with a
// per-layer output projection and a time-concatenation reduction after a
// configurable layer. Strictly causal, so output row t only depends on
// input frames <= (t+1)*reduce_factor.
struct EncoderConfig {
  int input_dim = 16;    // feature dim after the stacking frontend
  int layers = 2;
  int hidden = 32;
  int proj = 16;
  int reduce_after_layer = 1;  // 1-based; 0 disables time reduction
  int reduce_factor = 2;

  // a trailing time reduction widens the output by the factor
  int output_dim() const {
    return reduce_after_layer == layers && reduce_factor > 1
               ? proj * reduce_factor
               : proj;
  }
  void validate() const;
};

ParamSet init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed);

// frames: T x input_dim node; returns the encoding e with
// ceil(T/reduce_factor) rows (when reduction is enabled).
NodeId encode_audio(Tape& tape, NodeId frames, const EncoderConfig& cfg,
                    const BoundParams& enc);

// Convenience: places the (already stacked/downsampled) frames on the tape.
NodeId frames_node(Tape& tape, const FrameSequence& frames);

}  // namespace twopass

#endif  // TWOPASS_ENCODER_HPP
