#ifndef TWOPASS_DATA_HPP
#define TWOPASS_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "twopass/common.hpp"

namespace twopass {

// Symbol table with reserved ids at the front. Blank is the transducer
// no-emit symbol, eos doubles as the padding symbol for hypothesis
// encoding. Reserved symbols never appear in reference transcripts.
class Vocab {
 public:
  static constexpr TokenId kBlank = 0;
  static constexpr TokenId kSos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr int kNumReserved = 3;

  Vocab() = default;
  explicit Vocab(std::vector<std::string> symbols);

  // "<blank>", "<s>", "</s>" plus n generated content symbols
  static Vocab with_content_symbols(int n);

  int size() const { return static_cast<int>(symbols_.size()); }
  int content_size() const { return size() - kNumReserved; }
  TokenId first_content() const { return kNumReserved; }
  bool is_reserved(TokenId id) const { return id >= 0 && id < kNumReserved; }
  bool is_content(TokenId id) const {
    return id >= kNumReserved && id < size();
  }
  const std::string& symbol(TokenId id) const;
  std::string token_string(const TokenSeq& tokens) const;

  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
};

// one symbol per line, line number = id
void write_vocab(const Vocab& vocab, const std::string& path);
Vocab read_vocab(const std::string& path);

// T x F feature frames. Stored as 32-bit floats so the on-disk corpus
// round-trips bit-exactly; math promotes to double at the model boundary.
struct FrameSequence {
  int t = 0;
  int f = 0;
  std::vector<float> data;  // row-major, t*f values

  float at(int ti, int fi) const { return data[static_cast<std::size_t>(ti) * f + fi]; }
  float& at(int ti, int fi) { return data[static_cast<std::size_t>(ti) * f + fi]; }
  Mat to_matrix() const;
  void validate() const;
};

struct Utterance {
  FrameSequence frames;
  TokenSeq reference;
};

struct GenConfig {
  int min_len = 2;
  int max_len = 10;
  int frames_per_token = 2;
  double noise_sigma = 0.0;
  int feat_dim = 8;
  std::uint64_t signature_seed = 1234;
};

// Fixed random unit vector identifying a content token; pure function of
// (signature_seed, token, feat_dim).
std::vector<float> token_signature(TokenId token, int feat_dim,
                                   std::uint64_t signature_seed);

// Random token sequence, each token emitting frames_per_token copies of its
// signature plus Gaussian noise. Deterministic given the seed.
Utterance generate_utterance(std::uint64_t seed, const Vocab& vocab,
                             const GenConfig& cfg);

// Per-utterance seeds derived as seed + index; generation is parallel.
std::vector<Utterance> generate_corpus(std::uint64_t seed, int count,
                                       const Vocab& vocab, const GenConfig& cfg,
                                       int threads = 1);

// Frame stacking and downsampling frontend: output frame j is the
// concatenation of input frames j*stride-stack_prev .. j*stride (older
// first, left-padded by repeating frame 0), so F' = F*(stack_prev+1) and
// T' = ceil(T/stride).
FrameSequence stack_downsample(const FrameSequence& frames, int stack_prev,
                               int stride);

// Pads with eos to exactly l_pad; longer inputs keep their first l_pad-1
// tokens and get a forced terminal eos.
TokenSeq pad_hypothesis(const TokenSeq& tokens, int l_pad,
                        TokenId eos = Vocab::kEos);

// Corpus file: "DLBC" magic, u32 version, u32 utterance count, then per
// utterance u32 T, u32 F, T*F little-endian f32 frames, u32 token count,
// tokens as u32. Write-then-read is bit-exact.
void write_corpus(const std::vector<Utterance>& corpus, const std::string& path);
std::vector<Utterance> read_corpus(const std::string& path);

}  // namespace twopass

#endif  // TWOPASS_DATA_HPP
