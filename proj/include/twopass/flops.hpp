#ifndef TWOPASS_FLOPS_HPP
#define TWOPASS_FLOPS_HPP

#include "twopass/model.hpp"

namespace twopass {

// Inputs of the second-pass cost model
//   FLOPS = M_B*N*H + M_D*N*B + FLOPS_atten
// where FLOPS_atten sums, per attention layer, the source-side parameter
// count times the source length (audio frames for the acoustic layer,
// H*L_pad for the text layer) plus the query-side parameter count times N.
struct AttentionLayerSize {
  double source_params = 0.0;  // parameters applied per source position
  double query_params = 0.0;   // parameters applied per decoded token
};

struct FlopsInput {
  double m_b = 0.0;      // bidirectional hypothesis-encoder parameter count
  double m_d = 0.0;      // decoder parameter count
  double n = 0.0;        // decoded tokens
  double h = 0.0;        // first-pass hypotheses attended to
  double b = 0.0;        // second beam size
  double t_frames = 0.0; // acoustic attention source length
  double l_pad = 0.0;    // padded hypothesis length
  AttentionLayerSize acoustic;
  AttentionLayerSize text;
};

double estimate_flops(const FlopsInput& input);

// Counts model parameters into the cost-model inputs. Attention parameter
// counts split into the source-side projections (keys/values) and the
// query-side ones (query/output).
FlopsInput flops_input_from_model(const TwoPassModel& model, double n_tokens,
                                  double h, double b, double t_frames);

}  // namespace twopass

#endif  // TWOPASS_FLOPS_HPP
