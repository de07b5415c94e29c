#include "twopass/flops.hpp"

namespace twopass {

double estimate_flops(const FlopsInput& input) {
  const double decoder_terms = input.m_b * input.n * input.h +
                               input.m_d * input.n * input.b;
  const double acoustic_atten = input.acoustic.source_params * input.t_frames +
                                input.acoustic.query_params * input.n;
  const double text_atten = input.text.source_params * (input.h * input.l_pad) +
                            input.text.query_params * input.n;
  return decoder_terms + acoustic_atten + text_atten;
}

namespace {

double count_params(const ParamSet& set, const std::string& prefix) {
  double total = 0.0;
  for (const ParamSet::Entry& e : set.items) {
    if (e.name.rfind(prefix, 0) == 0) {
      total += static_cast<double>(e.t.numel());
    }
  }
  return total;
}

}  // namespace

FlopsInput flops_input_from_model(const TwoPassModel& model, double n_tokens,
                                  double h, double b, double t_frames) {
  if (!model.has_delib) {
    throw ValueError("flops_input_from_model: model has no second pass");
  }
  FlopsInput in;
  in.n = n_tokens;
  in.h = h;
  in.b = b;
  in.t_frames = t_frames;
  in.l_pad = static_cast<double>(model.delib_cfg.l_pad);
  in.m_b = count_params(model.delib, "embed") +
           count_params(model.delib, "hyp.");
  in.m_d = count_params(model.delib, "dec.") +
           count_params(model.delib, "ae.");
  in.text.source_params = count_params(model.delib, "attn.text.wk") +
                          count_params(model.delib, "attn.text.wv");
  in.text.query_params = count_params(model.delib, "attn.text.wq") +
                         count_params(model.delib, "attn.text.wo");
  in.acoustic.source_params = count_params(model.delib, "attn.acoustic.wk") +
                              count_params(model.delib, "attn.acoustic.wv");
  in.acoustic.query_params = count_params(model.delib, "attn.acoustic.wq") +
                             count_params(model.delib, "attn.acoustic.wo");
  return in;
}

}  // namespace twopass
