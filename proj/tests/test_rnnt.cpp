#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "twopass/encoder.hpp"
#include "twopass/rnnt.hpp"

using namespace twopass;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  }
  return m;
}

// Brute-force alignment enumeration oracle. Walks every monotonic path of
// the (T'+1) x (U+1) lattice where blanks consume frames and labels are
// emitted while frames remain, multiplying transition probabilities in
// extended precision. Counts paths on the side.
long double enumerate_paths(const Mat& logp, int t_len, const TokenSeq& y,
                            int t, int u, long double acc,
                            long long* path_count) {
  const int u_len = static_cast<int>(y.size());
  if (t == t_len && u == u_len) {
    if (path_count) ++*path_count;
    return expl(acc);
  }
  const auto row = [&](int tt, int uu) { return tt * (u_len + 1) + uu; };
  long double total = 0.0L;
  if (t < t_len) {
    total += enumerate_paths(logp, t_len, y, t + 1, u,
                             acc + logp(row(t, u), Vocab::kBlank), path_count);
  }
  if (u < u_len && t < t_len) {
    total += enumerate_paths(
        logp, t_len, y, t, u + 1,
        acc + logp(row(t, u), y[static_cast<std::size_t>(u)]), path_count);
  }
  return total;
}

struct TinyRnnt {
  RnntConfig cfg;
  ParamSet params;
  Mat enc;
};

TinyRnnt make_tiny(std::uint64_t seed, int vocab, int t_len, int enc_dim = 3) {
  TinyRnnt m;
  m.cfg.vocab_size = vocab;
  m.cfg.embed_dim = 3;
  m.cfg.pred_layers = 1;
  m.cfg.pred_hidden = 4;
  m.cfg.pred_proj = 3;
  m.cfg.joint_hidden = 4;
  m.cfg.enc_dim = enc_dim;
  m.params = init_rnnt_params(m.cfg, seed);
  std::mt19937_64 rng(seed ^ 0xabcdef);
  m.enc = random_mat(t_len, enc_dim, rng);
  return m;
}

double oracle_loss(TinyRnnt& m, const TokenSeq& y, long long* paths = nullptr) {
  Tape tape;
  BoundParams p = bind_const(tape, m.params);
  NodeId logp = rnnt_alignment_log_probs(tape, tape.constant(m.enc), y, m.cfg, p);
  const long double total = enumerate_paths(
      tape.value(logp), static_cast<int>(m.enc.rows()), y, 0, 0, 0.0L, paths);
  return -static_cast<double>(logl(total));
}

double dp_loss(TinyRnnt& m, const TokenSeq& y) {
  Tape tape;
  BoundParams p = bind_const(tape, m.params);
  return tape.scalar_value(
      rnnt_loss(tape, tape.constant(m.enc), y, m.cfg, p));
}

}  // namespace

TEST_CASE("encoder: factor 1 keeps the time length") {
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.layers = 2;
  cfg.hidden = 5;
  cfg.proj = 3;
  cfg.reduce_after_layer = 0;
  cfg.reduce_factor = 1;
  ParamSet params = init_encoder_params(cfg, 1);
  std::mt19937_64 rng(2);
  Mat frames = random_mat(7, 4, rng);
  Tape tape;
  BoundParams p = bind_const(tape, params);
  NodeId e = encode_audio(tape, tape.constant(frames), cfg, p);
  CHECK(tape.value(e).rows() == 7);
  CHECK(tape.value(e).cols() == 3);
}

TEST_CASE("encoder: T=5 with factor 2 gives 3 frames, last group padded") {
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.layers = 2;
  cfg.hidden = 5;
  cfg.proj = 3;
  cfg.reduce_after_layer = 1;
  cfg.reduce_factor = 2;
  ParamSet params = init_encoder_params(cfg, 3);
  std::mt19937_64 rng(4);
  Mat frames = random_mat(5, 4, rng);
  Tape tape;
  BoundParams p = bind_const(tape, params);
  NodeId e = encode_audio(tape, tape.constant(frames), cfg, p);
  CHECK(tape.value(e).rows() == 3);
}

TEST_CASE("encoder causality: truncating input keeps the prefix unchanged") {
  EncoderConfig cfg;
  cfg.input_dim = 3;
  cfg.layers = 2;
  cfg.hidden = 4;
  cfg.proj = 3;
  cfg.reduce_after_layer = 1;
  cfg.reduce_factor = 2;
  ParamSet params = init_encoder_params(cfg, 9);
  std::mt19937_64 rng(10);
  Mat frames = random_mat(8, 3, rng);
  Tape tape;
  BoundParams p = bind_const(tape, params);
  const Mat full = tape.value(encode_audio(tape, tape.constant(frames), cfg, p));
  // first k*factor frames pin the first k outputs
  for (int k = 1; k <= 3; ++k) {
    Mat prefix = frames.topRows(2 * k);
    const Mat part =
        tape.value(encode_audio(tape, tape.constant(prefix), cfg, p));
    CHECK(part.topRows(k) == full.topRows(k));
  }
  // changing a late frame leaves earlier encoder outputs untouched
  Mat perturbed = frames;
  perturbed(7, 1) += 5.0;
  const Mat after =
      tape.value(encode_audio(tape, tape.constant(perturbed), cfg, p));
  CHECK(after.topRows(3) == full.topRows(3));
}

TEST_CASE("rnnt_loss with U=0 is the blank path exactly") {
  TinyRnnt m = make_tiny(5, 3, 3);
  Tape tape;
  BoundParams p = bind_const(tape, m.params);
  NodeId logp =
      rnnt_alignment_log_probs(tape, tape.constant(m.enc), {}, m.cfg, p);
  double expect = 0.0;
  for (int t = 0; t < 3; ++t) expect -= tape.value(logp)(t, Vocab::kBlank);
  CHECK(dp_loss(m, {}) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("rnnt_loss T'=2 U=1 matches exhaustive alignment enumeration") {
  TinyRnnt m = make_tiny(6, 3, 2);
  long long paths = 0;
  const double oracle = oracle_loss(m, {1}, &paths);
  // labels are emitted while frames remain, so the final emission is the
  // blank consuming the last frame: 2 interleavings for T'=2, U=1
  CHECK(paths == 2);
  CHECK(std::abs(dp_loss(m, {1}) - oracle) <= 1e-8);
}

TEST_CASE("rnnt_loss equals enumeration on random small instances") {
  std::mt19937_64 meta(99);
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const int vocab = 2 + static_cast<int>(meta() % 3);  // 2..4 incl blank
    const int t_len = 1 + static_cast<int>(meta() % 4);
    const int u_len = static_cast<int>(meta() % 4);
    TinyRnnt m = make_tiny(seed * 31, vocab, t_len);
    TokenSeq y;
    for (int i = 0; i < u_len; ++i) {
      y.push_back(1 + static_cast<int>(meta() % (vocab - 1)));
    }
    const double dp = dp_loss(m, y);
    CHECK(dp >= 0.0);
    CHECK(std::abs(dp - oracle_loss(m, y)) <= 1e-8);
  }
}

TEST_CASE("rnnt_loss rejects blank or out-of-vocab reference tokens") {
  TinyRnnt m = make_tiny(7, 3, 2);
  Tape tape;
  BoundParams p = bind_const(tape, m.params);
  CHECK_THROWS_AS(rnnt_loss(tape, tape.constant(m.enc), {0}, m.cfg, p),
                  ValueError);
  CHECK_THROWS_AS(rnnt_loss(tape, tape.constant(m.enc), {3}, m.cfg, p),
                  ValueError);
}

TEST_CASE("probability mass over capped label sequences stays below one") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    TinyRnnt m = make_tiny(seed, 3, 2);
    long double mass = 0.0L;
    std::vector<TokenSeq> all = {{}};
    for (int len = 1; len <= 4; ++len) {
      std::vector<TokenSeq> next;
      for (const TokenSeq& base : all) {
        if (static_cast<int>(base.size()) == len - 1) {
          for (TokenId k = 1; k <= 2; ++k) {
            TokenSeq ext = base;
            ext.push_back(k);
            next.push_back(ext);
          }
        }
      }
      all.insert(all.end(), next.begin(), next.end());
    }
    for (const TokenSeq& y : all) {
      mass += expl(static_cast<long double>(-dp_loss(m, y)));
    }
    CHECK(static_cast<double>(mass) <= 1.0 + 1e-12);
    CHECK(static_cast<double>(mass) > 0.5);  // most mass on short sequences
  }
}

TEST_CASE("rnnt_loss gradient matches finite differences") {
  TinyRnnt m = make_tiny(21, 3, 3);
  const TokenSeq y = {1, 2};
  auto loss = [&](bool with_grad) {
    Tape tape;
    BoundParams p = bind(tape, m.params);
    NodeId node = rnnt_loss(tape, tape.constant(m.enc), y, m.cfg, p);
    const double v = tape.scalar_value(node);
    if (with_grad) {
      tape.backward(node);
      accumulate_grads(p);
    }
    return v;
  };
  CHECK(finite_diff_check(loss, m.params, 1e-5) <= 1e-4);
}

TEST_CASE("beam-1 equals greedy decoding") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TinyRnnt m = make_tiny(seed * 101, 4, 4);
    Tape tape;
    BoundParams p = bind_const(tape, m.params);
    NodeId enc = tape.constant(m.enc);
    BeamSearchConfig bs;
    bs.beam = 1;
    bs.first_label = 1;
    Beam beam = rnnt_beam_search(tape, enc, m.cfg, p, bs);
    TokenSeq greedy = rnnt_greedy_decode(tape, enc, m.cfg, p, bs);
    REQUIRE(beam.size() == 1);
    CHECK(beam.top().tokens == greedy);
  }
}

TEST_CASE("beam search returns a sorted, duplicate-free beam") {
  TinyRnnt m = make_tiny(77, 4, 3);
  Tape tape;
  BoundParams p = bind_const(tape, m.params);
  BeamSearchConfig bs;
  bs.beam = 6;
  bs.first_label = 1;
  Beam beam = rnnt_beam_search(tape, tape.constant(m.enc), m.cfg, p, bs);
  beam.validate();
  CHECK(beam.size() > 1);
  for (const Hypothesis& h : beam.hyps) CHECK(h.log_prob <= 0.0);
}

TEST_CASE("exhaustive beam search recovers the exhaustive-argmax sequence") {
  for (std::uint64_t seed : {3ULL, 8ULL, 15ULL}) {
    TinyRnnt m = make_tiny(seed, 3, 2);  // blank + 2 labels, T'=2
    Tape tape;
    BoundParams p = bind_const(tape, m.params);
    BeamSearchConfig bs;
    bs.beam = 4096;  // wide enough that nothing is ever pruned
    bs.max_symbols_per_frame = 3;
    bs.first_label = 1;
    Beam beam = rnnt_beam_search(tape, tape.constant(m.enc), m.cfg, p, bs);

    // oracle: score every label sequence reachable within the symbol cap
    TokenSeq best;
    double best_score = -1e300;
    std::vector<TokenSeq> frontier = {{}};
    for (int len = 0; len <= 6; ++len) {
      std::vector<TokenSeq> next;
      for (const TokenSeq& y : frontier) {
        if (static_cast<int>(y.size()) == len) {
          const double score = -dp_loss(m, y);
          if (score > best_score ||
              (score == best_score && y < best)) {
            best_score = score;
            best = y;
          }
          for (TokenId k = 1; k <= 2; ++k) {
            TokenSeq ext = y;
            ext.push_back(k);
            next.push_back(ext);
          }
        }
      }
      frontier = std::move(next);
    }
    CHECK(beam.top().tokens == best);
    // with no pruning, each beam score is the full-lattice path sum
    for (std::size_t i = 0; i < std::min<std::size_t>(beam.size(), 5); ++i) {
      const double full = -dp_loss(m, beam.hyps[i].tokens);
      CHECK(std::abs(beam.hyps[i].log_prob - full) <= 1e-8);
    }
  }
}
