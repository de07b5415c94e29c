#include "twopass/model.hpp"

namespace twopass {

void TwoPassModel::validate() const {
  enc_cfg.validate();
  rnnt_cfg.validate();
  if (frontend.feat_dim < 1 || frontend.stack_prev < 0 || frontend.stride < 1) {
    throw ValueError("frontend config: bad dims");
  }
  if (enc_cfg.input_dim != frontend.input_dim()) {
    throw ValueError("model: encoder input dim does not match frontend");
  }
  if (rnnt_cfg.enc_dim != enc_cfg.output_dim()) {
    throw ValueError("model: joint network enc dim does not match encoder");
  }
  if (has_delib) {
    delib_cfg.validate();
    if (delib_cfg.enc_dim != enc_cfg.output_dim()) {
      throw ValueError("model: deliberation enc dim does not match encoder");
    }
    if (delib_cfg.vocab_size != rnnt_cfg.vocab_size) {
      throw ValueError("model: vocab sizes of the two passes disagree");
    }
  }
}

TwoPassModel make_first_pass_model(const FrontendConfig& frontend,
                                   const EncoderConfig& enc_cfg,
                                   const RnntConfig& rnnt_cfg,
                                   std::uint64_t seed) {
  TwoPassModel m;
  m.frontend = frontend;
  m.enc_cfg = enc_cfg;
  m.rnnt_cfg = rnnt_cfg;
  m.enc = init_encoder_params(enc_cfg, seed);
  m.rnnt = init_rnnt_params(rnnt_cfg, seed + 1);
  m.validate();
  return m;
}

void add_deliberation(TwoPassModel& model, const DeliberationConfig& cfg,
                      std::uint64_t seed) {
  model.delib_cfg = cfg;
  model.delib = init_delib_params(cfg, seed);
  model.has_delib = true;
  model.validate();
}

NodeId encode_utterance(Tape& tape, const TwoPassModel& model,
                        const FrameSequence& frames, const BoundParams& enc) {
  FrameSequence stacked =
      stack_downsample(frames, model.frontend.stack_prev, model.frontend.stride);
  return encode_audio(tape, frames_node(tape, stacked), model.enc_cfg, enc);
}

}  // namespace twopass
