#include "twopass/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "twopass/parallel.hpp"

namespace twopass {

std::string to_string(DecodeKind kind) {
  switch (kind) {
    case DecodeKind::kFirstPass:
      return "first-pass";
    case DecodeKind::kBeamSearch:
      return "beam";
    case DecodeKind::kRescoring:
      return "rescore";
  }
  throw ValueError("unknown decode kind");
}

std::vector<DecodeOutput> decode_corpus(const TwoPassModel& model,
                                        const std::vector<Utterance>& corpus,
                                        const CorpusDecodeConfig& cfg) {
  std::vector<DecodeOutput> outputs(corpus.size());
  parallel_for(static_cast<std::int64_t>(corpus.size()), cfg.threads,
               [&](std::int64_t i) {
    const Utterance& utt = corpus[static_cast<std::size_t>(i)];
    DecodeOutput& out = outputs[static_cast<std::size_t>(i)];
    switch (cfg.kind) {
      case DecodeKind::kFirstPass: {
        Tape tape;
        BoundParams enc = bind_const(tape, model.enc);
        BoundParams rnnt = bind_const(tape, model.rnnt);
        NodeId e = encode_utterance(tape, model, utt.frames, enc);
        BeamSearchConfig bs;
        bs.beam = cfg.decode.b1;
        bs.max_symbols_per_frame = cfg.decode.max_symbols_per_frame;
        bs.first_label = Vocab::kNumReserved;
        out.nbest = rnnt_beam_search(tape, e, model.rnnt_cfg, rnnt, bs);
        break;
      }
      case DecodeKind::kBeamSearch: {
        out.nbest = decode_two_pass(model, utt.frames, cfg.decode).second_pass;
        break;
      }
      case DecodeKind::kRescoring: {
        out.nbest = rescore_first_pass(model, utt.frames, cfg.decode).rescored;
        break;
      }
    }
  });
  return outputs;
}

double corpus_wer(const std::vector<Utterance>& corpus,
                  const std::vector<DecodeOutput>& outputs) {
  std::vector<TokenSeq> refs, hyps;
  refs.reserve(corpus.size());
  hyps.reserve(outputs.size());
  for (const Utterance& u : corpus) refs.push_back(u.reference);
  for (const DecodeOutput& o : outputs) hyps.push_back(o.top().tokens);
  return compute_wer(refs, hyps);
}

void write_decode_outputs(const std::vector<DecodeOutput>& outputs,
                          const Vocab& vocab, bool nbest,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open decode output for writing: " + path);
  char score[32];
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (nbest) {
      for (std::size_t r = 0; r < outputs[i].nbest.size(); ++r) {
        const Hypothesis& h = outputs[i].nbest.hyps[r];
        std::snprintf(score, sizeof(score), "%.6f", h.log_prob);
        f << i << '\t' << r << '\t' << vocab.token_string(h.tokens) << '\t'
          << score << '\n';
      }
    } else {
      const Hypothesis& h = outputs[i].top();
      std::snprintf(score, sizeof(score), "%.6f", h.log_prob);
      f << i << '\t' << vocab.token_string(h.tokens) << '\t' << score << '\n';
    }
  }
}

// ---- attention heatmaps -----------------------------------------------

void export_heatmap_csv(const Mat& weights,
                        const std::vector<std::string>& source_labels,
                        const std::vector<std::string>& output_labels,
                        const std::string& path) {
  if (static_cast<Eigen::Index>(source_labels.size()) != weights.cols() ||
      static_cast<Eigen::Index>(output_labels.size()) != weights.rows()) {
    throw ValueError("heatmap csv: label counts do not match weight dims");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open heatmap csv for writing: " + path);
  f << "step";
  for (const std::string& s : source_labels) f << ',' << s;
  f << '\n';
  char cell[32];
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    f << output_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      std::snprintf(cell, sizeof(cell), "%.6f", weights(i, j));
      f << ',' << cell;
    }
    f << '\n';
  }
  if (!f) throw FormatError("write failed for heatmap csv: " + path);
}

void export_heatmap_pgm(const Mat& weights, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open heatmap pgm for writing: " + path);
  f << "P5\n" << weights.cols() << ' ' << weights.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      const double p = std::min(1.0, std::max(0.0, weights(i, j)));
      const unsigned char px =
          static_cast<unsigned char>(std::lround(255.0 * p));
      f.write(reinterpret_cast<const char*>(&px), 1);
    }
  }
  if (!f) throw FormatError("write failed for heatmap pgm: " + path);
}

Mat read_heatmap_csv(const std::string& path,
                     std::vector<std::string>* source_labels,
                     std::vector<std::string>* output_labels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open heatmap csv: " + path);
  std::string line;
  if (!std::getline(f, line)) throw FormatError("heatmap csv is empty");
  std::vector<std::string> header;
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) header.push_back(cell);
  if (header.empty() || header[0] != "step") {
    throw FormatError("heatmap csv has a bad header");
  }
  const std::size_t cols = header.size() - 1;
  if (source_labels) {
    source_labels->assign(header.begin() + 1, header.end());
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string label;
    if (!std::getline(ls, label, ',')) {
      throw FormatError("heatmap csv row is malformed");
    }
    if (output_labels) output_labels->push_back(label);
    std::size_t got = 0;
    while (std::getline(ls, cell, ',')) {
      values.push_back(std::stod(cell));
      ++got;
    }
    if (got != cols) throw FormatError("heatmap csv row has wrong arity");
    ++rows;
  }
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          values[i * cols + j];
    }
  }
  return m;
}

PgmImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open pgm: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw FormatError("pgm has bad magic: " + path);
  PgmImage img;
  int maxval = 0;
  f >> img.width >> img.height >> maxval;
  if (!f || img.width < 1 || img.height < 1 || maxval != 255) {
    throw FormatError("pgm header is malformed: " + path);
  }
  f.get();  // single whitespace after the header
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw FormatError("pgm truncated: " + path);
  return img;
}

// ---- ablation suite ---------------------------------------------------

std::vector<AblationEntry> default_ablation_matrix() {
  std::vector<AblationEntry> matrix;
  AblationEntry base;
  base.id = "B0";
  base.first_pass_only = true;
  matrix.push_back(base);
  const int hyp_counts[] = {1, 2, 4, 8};
  const AttentionMode modes[] = {AttentionMode::kBoth,
                                 AttentionMode::kAcousticsOnly,
                                 AttentionMode::kTextOnly};
  for (int h : hyp_counts) {
    for (AttentionMode mode : modes) {
      for (bool ae : {false, true}) {
        for (bool rescoring : {false, true}) {
          AblationEntry e;
          e.first_pass_only = false;
          e.mode = mode;
          e.num_hyps = h;
          e.ae = ae;
          e.rescoring = rescoring;
          std::ostringstream id;
          id << "H" << h << "_" << to_string(mode) << "_ae" << (ae ? 1 : 0)
             << "_" << (rescoring ? "rescore" : "beam");
          e.id = id.str();
          matrix.push_back(e);
        }
      }
    }
  }
  return matrix;
}

const TwoPassModel& AblationModels::for_entry(const AblationEntry& entry) const {
  if (entry.first_pass_only) {
    if (!first_pass) throw ValueError("ablation: missing first-pass checkpoint");
    return *first_pass;
  }
  auto it = delib.find({to_string(entry.mode), entry.ae});
  if (it == delib.end() || !it->second) {
    throw ValueError("ablation: missing checkpoint for mode=" +
                     to_string(entry.mode) + " ae=" +
                     std::to_string(entry.ae ? 1 : 0));
  }
  return *it->second;
}

namespace {

double mean_tokens(const std::vector<DecodeOutput>& outputs) {
  if (outputs.empty()) return 0.0;
  double total = 0.0;
  for (const DecodeOutput& o : outputs) {
    total += static_cast<double>(o.top().tokens.size());
  }
  return total / static_cast<double>(outputs.size());
}

double mean_encoder_frames(const TwoPassModel& model,
                           const std::vector<Utterance>& corpus) {
  double total = 0.0;
  for (const Utterance& u : corpus) {
    const int stacked =
        (u.frames.t + model.frontend.stride - 1) / model.frontend.stride;
    const int factor = model.enc_cfg.reduce_after_layer > 0
                           ? model.enc_cfg.reduce_factor
                           : 1;
    total += (stacked + factor - 1) / factor;
  }
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

double first_pass_gflops(const TwoPassModel& model, double n_tokens, int b1) {
  double decoder_params = 0.0;
  for (const ParamSet::Entry& e : model.rnnt.items) {
    decoder_params += static_cast<double>(e.t.numel());
  }
  return decoder_params * n_tokens * static_cast<double>(b1) / 1e9;
}

}  // namespace

std::vector<AblationRow> run_ablation_suite(
    const std::vector<Utterance>& corpus, const AblationModels& models,
    const std::vector<AblationEntry>& matrix, int b1, int b2, int threads) {
  std::vector<AblationRow> rows;
  rows.reserve(matrix.size());
  for (const AblationEntry& entry : matrix) {
    const TwoPassModel& model = models.for_entry(entry);
    CorpusDecodeConfig cfg;
    cfg.threads = threads;
    cfg.decode.b1 = b1;
    cfg.decode.b2 = b2;
    cfg.decode.num_hyps = entry.num_hyps;
    cfg.decode.mode = entry.mode;
    cfg.decode.use_ae = entry.ae;
    if (entry.first_pass_only) {
      cfg.kind = DecodeKind::kFirstPass;
    } else {
      cfg.kind = entry.rescoring ? DecodeKind::kRescoring
                                 : DecodeKind::kBeamSearch;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<DecodeOutput> outputs = decode_corpus(model, corpus, cfg);
    const auto t1 = std::chrono::steady_clock::now();

    AblationRow row;
    row.config_id = entry.id;
    row.mode = entry.first_pass_only ? "none" : to_string(entry.mode);
    row.num_hyps = entry.first_pass_only ? 0 : entry.num_hyps;
    row.ae = entry.ae;
    row.decode = entry.first_pass_only
                     ? "first-pass"
                     : (entry.rescoring ? "rescore" : "beam");
    row.wer = corpus_wer(corpus, outputs);
    const double n_tokens = mean_tokens(outputs);
    const double frames = mean_encoder_frames(model, corpus);
    if (entry.first_pass_only) {
      row.gflops = first_pass_gflops(model, n_tokens, b1);
    } else {
      // rescoring scores the candidates instead of running a beam, so the
      // decoder term scales with the rescored set size
      const double b_eff =
          entry.rescoring ? static_cast<double>(entry.num_hyps) : b2;
      FlopsInput in = flops_input_from_model(
          model, n_tokens, static_cast<double>(entry.num_hyps), b_eff, frames);
      row.gflops = estimate_flops(in) / 1e9;
    }
    row.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string report_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "config_id,mode,H,AE,decode,wer,gflops\n";
  char buf[64];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.wer);
    os << r.config_id << ',' << r.mode << ',' << r.num_hyps << ','
       << (r.ae ? 1 : 0) << ',' << r.decode << ',' << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r.gflops);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace twopass
