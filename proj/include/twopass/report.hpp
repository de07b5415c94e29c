#ifndef TWOPASS_REPORT_HPP
#define TWOPASS_REPORT_HPP

#include <map>

#include "twopass/flops.hpp"
#include "twopass/second_pass.hpp"
#include "twopass/training.hpp"

namespace twopass {

enum class DecodeKind { kFirstPass, kBeamSearch, kRescoring };

std::string to_string(DecodeKind kind);

struct CorpusDecodeConfig {
  DecodeKind kind = DecodeKind::kBeamSearch;
  TwoPassDecodeConfig decode;
  int threads = 1;
};

struct DecodeOutput {
  Beam nbest;  // first-pass, second-pass or rescored beam

  const Hypothesis& top() const { return nbest.top(); }
};

std::vector<DecodeOutput> decode_corpus(const TwoPassModel& model,
                                        const std::vector<Utterance>& corpus,
                                        const CorpusDecodeConfig& cfg);

double corpus_wer(const std::vector<Utterance>& corpus,
                  const std::vector<DecodeOutput>& outputs);

// Decode output file: "<index>\t<top-1 token string>\t<log-prob %.6f>",
// or with an extra rank column before the tokens for the n-best variant.
void write_decode_outputs(const std::vector<DecodeOutput>& outputs,
                          const Vocab& vocab, bool nbest,
                          const std::string& path);

// ---- attention heatmaps -----------------------------------------------

// CSV: header "step,<source labels...>", then one row per decoding step
// with the output label and the probabilities at 6 decimals.
void export_heatmap_csv(const Mat& weights,
                        const std::vector<std::string>& source_labels,
                        const std::vector<std::string>& output_labels,
                        const std::string& path);

// Binary 8-bit PGM (P5), one image row per decoding step,
// pixel = round(255 * p).
void export_heatmap_pgm(const Mat& weights, const std::string& path);

Mat read_heatmap_csv(const std::string& path,
                     std::vector<std::string>* source_labels = nullptr,
                     std::vector<std::string>* output_labels = nullptr);

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;
};
PgmImage read_pgm(const std::string& path);

// ---- ablation suite ---------------------------------------------------

struct AblationEntry {
  std::string id;
  bool first_pass_only = false;
  AttentionMode mode = AttentionMode::kBoth;
  int num_hyps = 8;
  bool ae = false;
  bool rescoring = false;  // false = second-pass beam search
};

struct AblationRow {
  std::string config_id;
  std::string mode;
  int num_hyps = 0;
  bool ae = false;
  std::string decode;
  double wer = 0.0;
  double gflops = 0.0;
  long long wall_ms = 0;
};

// {H in 1,2,4,8} x {both, acoustic, text} x {AE on/off} x {beam, rescore},
// preceded by the first-pass baseline row.
std::vector<AblationEntry> default_ablation_matrix();

// Checkpoints per (mode, AE) pair; every entry of the matrix must find its
// model here (or the shared first-pass model for baseline rows).
struct AblationModels {
  const TwoPassModel* first_pass = nullptr;
  std::map<std::pair<std::string, bool>, const TwoPassModel*> delib;

  const TwoPassModel& for_entry(const AblationEntry& entry) const;
};

std::vector<AblationRow> run_ablation_suite(
    const std::vector<Utterance>& corpus, const AblationModels& models,
    const std::vector<AblationEntry>& matrix, int b1, int b2, int threads);

// header "config_id,mode,H,AE,decode,wer,gflops"
std::string report_csv(const std::vector<AblationRow>& rows);

}  // namespace twopass

#endif  // TWOPASS_REPORT_HPP
