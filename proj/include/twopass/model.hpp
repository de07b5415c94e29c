#ifndef TWOPASS_MODEL_HPP
#define TWOPASS_MODEL_HPP

#include <cstdint>

#include "twopass/deliberation.hpp"
#include "twopass/encoder.hpp"

namespace twopass {

// Frame stacking/downsampling applied before the shared encoder.
struct FrontendConfig {
  int feat_dim = 8;
  int stack_prev = 1;
  int stride = 2;

  int input_dim() const { return feat_dim * (stack_prev + 1); }
};

// Everything needed to run both passes: configs plus the three named
// parameter groups (enc = shared encoder, rnnt = first-pass decoder,
// delib = second-pass decoder and AE).
struct TwoPassModel {
  FrontendConfig frontend;
  EncoderConfig enc_cfg;
  RnntConfig rnnt_cfg;
  DeliberationConfig delib_cfg;
  bool has_delib = false;

  ParamSet enc;
  ParamSet rnnt;
  ParamSet delib;

  void validate() const;
};

TwoPassModel make_first_pass_model(const FrontendConfig& frontend,
                                   const EncoderConfig& enc_cfg,
                                   const RnntConfig& rnnt_cfg,
                                   std::uint64_t seed);

void add_deliberation(TwoPassModel& model, const DeliberationConfig& cfg,
                      std::uint64_t seed);

// Stacking frontend + shared encoder in one call.
NodeId encode_utterance(Tape& tape, const TwoPassModel& model,
                        const FrameSequence& frames, const BoundParams& enc);

}  // namespace twopass

#endif  // TWOPASS_MODEL_HPP
