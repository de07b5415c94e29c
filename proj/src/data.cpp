#include "twopass/data.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "twopass/parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "corpus/checkpoint files assume a little-endian host");

namespace twopass {

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  if (size() < kNumReserved + 1) {
    throw ValueError("vocab needs at least one content symbol");
  }
}

Vocab Vocab::with_content_symbols(int n) {
  if (n < 1) throw ValueError("vocab needs at least one content symbol");
  std::vector<std::string> syms = {"<blank>", "<s>", "</s>"};
  for (int i = 0; i < n; ++i) {
    std::string s;
    int v = i;
    do {
      s.insert(s.begin(), static_cast<char>('a' + v % 26));
      v = v / 26 - 1;
    } while (v >= 0);
    syms.push_back(s);
  }
  return Vocab(std::move(syms));
}

const std::string& Vocab::symbol(TokenId id) const {
  if (id < 0 || id >= size()) {
    throw ValueError("vocab: token id " + std::to_string(id) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::string Vocab::token_string(const TokenSeq& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += symbol(tokens[i]);
  }
  return out;
}

void write_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open vocab file for writing: " + path);
  for (const std::string& s : vocab.symbols()) f << s << '\n';
}

Vocab read_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open vocab file: " + path);
  std::vector<std::string> syms;
  std::string line;
  while (std::getline(f, line)) syms.push_back(line);
  if (syms.size() < Vocab::kNumReserved + 1) {
    throw FormatError("vocab file too small: " + path);
  }
  return Vocab(std::move(syms));
}

Mat FrameSequence::to_matrix() const {
  Mat m(t, f);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < f; ++j) m(i, j) = static_cast<Scalar>(at(i, j));
  }
  return m;
}

void FrameSequence::validate() const {
  if (t < 1 || f < 1) throw ShapeError("frame sequence must have T,F >= 1");
  if (data.size() != static_cast<std::size_t>(t) * static_cast<std::size_t>(f)) {
    throw ShapeError("frame sequence data size does not match T*F");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError("non-finite frame value");
  }
}

std::vector<float> token_signature(TokenId token, int feat_dim,
                                   std::uint64_t signature_seed) {
  std::mt19937_64 rng(signature_seed * 0x9e3779b97f4a7c15ULL +
                      static_cast<std::uint64_t>(token));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> raw(static_cast<std::size_t>(feat_dim));
  double norm2 = 0.0;
  for (double& v : raw) {
    v = normal(rng);
    norm2 += v * v;
  }
  const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
  std::vector<float> sig(static_cast<std::size_t>(feat_dim));
  for (int i = 0; i < feat_dim; ++i) {
    sig[static_cast<std::size_t>(i)] = static_cast<float>(raw[static_cast<std::size_t>(i)] * inv);
  }
  return sig;
}

Utterance generate_utterance(std::uint64_t seed, const Vocab& vocab,
                             const GenConfig& cfg) {
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len) {
    throw ValueError("generate_utterance: need max_len >= min_len >= 1");
  }
  if (cfg.frames_per_token < 1) {
    throw ValueError("generate_utterance: frames_per_token must be >= 1");
  }
  if (vocab.content_size() < 1) {
    throw ValueError("generate_utterance: vocab has no content symbols");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<int> tok_dist(vocab.first_content(),
                                              vocab.size() - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  Utterance utt;
  const int len = len_dist(rng);
  utt.reference.reserve(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) utt.reference.push_back(tok_dist(rng));

  utt.frames.t = len * cfg.frames_per_token;
  utt.frames.f = cfg.feat_dim;
  utt.frames.data.resize(static_cast<std::size_t>(utt.frames.t) * cfg.feat_dim);
  int ti = 0;
  for (TokenId tok : utt.reference) {
    const std::vector<float> sig =
        token_signature(tok, cfg.feat_dim, cfg.signature_seed);
    for (int r = 0; r < cfg.frames_per_token; ++r, ++ti) {
      for (int j = 0; j < cfg.feat_dim; ++j) {
        const double v = static_cast<double>(sig[static_cast<std::size_t>(j)]) +
                         cfg.noise_sigma * noise(rng);
        utt.frames.at(ti, j) = static_cast<float>(v);
      }
    }
  }
  return utt;
}

std::vector<Utterance> generate_corpus(std::uint64_t seed, int count,
                                       const Vocab& vocab, const GenConfig& cfg,
                                       int threads) {
  std::vector<Utterance> corpus(static_cast<std::size_t>(count));
  parallel_for(count, threads, [&](std::int64_t i) {
    corpus[static_cast<std::size_t>(i)] =
        generate_utterance(seed + static_cast<std::uint64_t>(i), vocab, cfg);
  });
  return corpus;
}

FrameSequence stack_downsample(const FrameSequence& frames, int stack_prev,
                               int stride) {
  if (stack_prev < 0) throw ValueError("stack_downsample: stack_prev < 0");
  if (stride < 1) throw ValueError("stack_downsample: stride < 1");
  if (frames.t < 1) throw ShapeError("stack_downsample: empty frame sequence");
  FrameSequence out;
  out.t = (frames.t + stride - 1) / stride;
  out.f = frames.f * (stack_prev + 1);
  out.data.resize(static_cast<std::size_t>(out.t) * out.f);
  for (int j = 0; j < out.t; ++j) {
    const int center = j * stride;
    for (int s = 0; s <= stack_prev; ++s) {
      const int src = std::max(center - stack_prev + s, 0);
      for (int k = 0; k < frames.f; ++k) {
        out.at(j, s * frames.f + k) = frames.at(src, k);
      }
    }
  }
  return out;
}

TokenSeq pad_hypothesis(const TokenSeq& tokens, int l_pad, TokenId eos) {
  if (l_pad < 1) throw ValueError("pad_hypothesis: l_pad must be >= 1");
  TokenSeq out;
  out.reserve(static_cast<std::size_t>(l_pad));
  if (static_cast<int>(tokens.size()) > l_pad) {
    out.assign(tokens.begin(), tokens.begin() + (l_pad - 1));
    out.push_back(eos);
  } else {
    out = tokens;
    out.resize(static_cast<std::size_t>(l_pad), eos);
  }
  return out;
}

// ---- corpus file ------------------------------------------------------------

namespace {

constexpr char kCorpusMagic[4] = {'D', 'L', 'B', 'C'};
constexpr std::uint32_t kCorpusVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw FormatError(std::string("corpus file truncated at ") + what);
  return v;
}

}  // namespace

void write_corpus(const std::vector<Utterance>& corpus,
                  const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open corpus file for writing: " + path);
  f.write(kCorpusMagic, 4);
  write_u32(f, kCorpusVersion);
  write_u32(f, static_cast<std::uint32_t>(corpus.size()));
  for (const Utterance& u : corpus) {
    u.frames.validate();
    write_u32(f, static_cast<std::uint32_t>(u.frames.t));
    write_u32(f, static_cast<std::uint32_t>(u.frames.f));
    f.write(reinterpret_cast<const char*>(u.frames.data.data()),
            static_cast<std::streamsize>(u.frames.data.size() * sizeof(float)));
    write_u32(f, static_cast<std::uint32_t>(u.reference.size()));
    for (TokenId t : u.reference) {
      write_u32(f, static_cast<std::uint32_t>(t));
    }
  }
  if (!f) throw FormatError("write failed for corpus file: " + path);
}

std::vector<Utterance> read_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open corpus file: " + path);
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCorpusMagic, 4) != 0) {
    throw FormatError("corpus file has bad magic: " + path);
  }
  const std::uint32_t version = read_u32(f, "version");
  if (version != kCorpusVersion) {
    throw FormatError("corpus file version " + std::to_string(version) +
                      " unsupported (expected " +
                      std::to_string(kCorpusVersion) + ")");
  }
  const std::uint32_t count = read_u32(f, "utterance count");
  std::vector<Utterance> corpus(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Utterance& u = corpus[i];
    u.frames.t = static_cast<int>(read_u32(f, "T"));
    u.frames.f = static_cast<int>(read_u32(f, "F"));
    if (u.frames.t < 1 || u.frames.f < 1 ||
        static_cast<std::int64_t>(u.frames.t) * u.frames.f > (1 << 28)) {
      throw FormatError("corpus file declares bad frame dims");
    }
    u.frames.data.resize(static_cast<std::size_t>(u.frames.t) * u.frames.f);
    f.read(reinterpret_cast<char*>(u.frames.data.data()),
           static_cast<std::streamsize>(u.frames.data.size() * sizeof(float)));
    if (!f) throw FormatError("corpus file truncated in frame data");
    const std::uint32_t n_tok = read_u32(f, "token count");
    if (n_tok > (1u << 20)) throw FormatError("corpus file declares bad token count");
    u.reference.resize(n_tok);
    for (std::uint32_t k = 0; k < n_tok; ++k) {
      u.reference[k] = static_cast<TokenId>(read_u32(f, "token"));
    }
    u.frames.validate();
  }
  return corpus;
}

}  // namespace twopass
