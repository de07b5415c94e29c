#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "test_helpers.hpp"
#include "twopass/report.hpp"

using namespace twopass;
using twopass::testing::tiny_corpus;
using twopass::testing::tiny_model;

TEST_CASE("compute_wer basics") {
  CHECK(compute_wer({{3, 4}, {5}}, {{3, 4}, {5}}) == 0.0);
  // one substitution against 10 reference tokens total
  std::vector<TokenSeq> refs = {{3, 4, 5, 6, 7}, {3, 4, 5, 6, 7}};
  std::vector<TokenSeq> hyps = {{3, 4, 5, 6, 7}, {3, 9, 5, 6, 7}};
  CHECK(compute_wer(refs, hyps) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS_AS(compute_wer({{3}}, {}), ValueError);
  CHECK_THROWS_AS(compute_wer({{}, {}}, {{}, {}}), ValueError);
}

TEST_CASE("compute_wer equals the per-utterance summation oracle") {
  std::mt19937_64 rng(9);
  std::vector<TokenSeq> refs, hyps;
  long long err = 0, len = 0;
  for (int i = 0; i < 40; ++i) {
    TokenSeq r(1 + rng() % 7), h(rng() % 8);
    for (TokenId& t : r) t = static_cast<TokenId>(3 + rng() % 5);
    for (TokenId& t : h) t = static_cast<TokenId>(3 + rng() % 5);
    err += word_errors(h, r);
    len += static_cast<long long>(r.size());
    refs.push_back(std::move(r));
    hyps.push_back(std::move(h));
  }
  CHECK(compute_wer(refs, hyps) ==
        doctest::Approx(static_cast<double>(err) / len).epsilon(1e-15));
}

namespace {

FlopsInput paper_scale_input() {
  FlopsInput in;
  in.m_b = 22e6;
  in.m_d = 42e6;
  in.n = 14;
  in.h = 8;
  in.b = 8;
  in.t_frames = 109;
  in.l_pad = 120;
  // 2M attention parameters split evenly across layers and sides
  in.acoustic.source_params = 0.5e6;
  in.acoustic.query_params = 0.5e6;
  in.text.source_params = 0.5e6;
  in.text.query_params = 0.5e6;
  return in;
}

}  // namespace

TEST_CASE("flops: N=0 leaves only the attention source terms") {
  FlopsInput in = paper_scale_input();
  in.n = 0;
  const double expect = 0.5e6 * 109 + 0.5e6 * (8.0 * 120);
  CHECK(estimate_flops(in) == expect);
}

TEST_CASE("flops at reference scale lands in the published band") {
  const double flops = estimate_flops(paper_scale_input());
  CHECK(flops >= 7.0e9);
  CHECK(flops <= 9.5e9);

  // single-attention configuration without a hypothesis encoder
  FlopsInput las = paper_scale_input();
  las.m_b = 0;
  las.h = 0;
  las.text.source_params = 0;
  las.text.query_params = 0;
  const double las_flops = estimate_flops(las);
  const double ratio = flops / las_flops;
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 2.1);
}

TEST_CASE("flops is exactly affine in the token count") {
  FlopsInput in = paper_scale_input();
  auto at = [&](double n) {
    FlopsInput x = in;
    x.n = n;
    return estimate_flops(x);
  };
  const double slope = at(1.0) - at(0.0);
  for (double n : {2.0, 5.0, 17.0, 128.0}) {
    CHECK(at(n) == at(0.0) + n * slope);
  }
}

TEST_CASE("heatmap pixel formula on fixed matrices") {
  const std::string prefix = "/tmp/twopass_heat";
  // 1x1 weight 1.0 -> pixel 255
  Mat w1(1, 1);
  w1 << 1.0;
  export_heatmap_pgm(w1, prefix + "_a.pgm");
  PgmImage a = read_pgm(prefix + "_a.pgm");
  CHECK(a.width == 1);
  CHECK(a.height == 1);
  CHECK(a.pixels[0] == 255);

  // uniform 1x4 row -> round(255/4) = 64 everywhere
  Mat w2 = Mat::Constant(1, 4, 0.25);
  export_heatmap_pgm(w2, prefix + "_b.pgm");
  PgmImage b = read_pgm(prefix + "_b.pgm");
  CHECK(b.width == 4);
  CHECK(b.height == 1);
  for (unsigned char px : b.pixels) CHECK(px == 64);

  // dims track the weight matrix
  Mat w3 = Mat::Constant(3, 5, 0.2);
  export_heatmap_pgm(w3, prefix + "_c.pgm");
  PgmImage c = read_pgm(prefix + "_c.pgm");
  CHECK(c.width == 5);
  CHECK(c.height == 3);
  for (unsigned char px : c.pixels) CHECK(px == 51);
}

TEST_CASE("heatmap csv round-trips to six decimals") {
  std::mt19937_64 rng(13);
  Mat w(3, 4);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Eigen::Array<double, 1, 4> raw;
    for (int j = 0; j < 4; ++j) raw(j) = static_cast<double>(rng() % 1000) + 1;
    w.row(i) = (raw / raw.sum()).matrix();
  }
  const std::vector<std::string> src = {"a", "b", "c", "</s>"};
  const std::vector<std::string> out_labels = {"x", "y", "</s>"};
  const std::string path = "/tmp/twopass_heat.csv";
  export_heatmap_csv(w, src, out_labels, path);
  std::vector<std::string> src_back, out_back;
  Mat back = read_heatmap_csv(path, &src_back, &out_back);
  CHECK(src_back == src);
  CHECK(out_back == out_labels);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 4);
  CHECK((back - w).cwiseAbs().maxCoeff() <= 0.5e-6);

  CHECK_THROWS_AS(export_heatmap_csv(w, {"a"}, out_labels, path), ValueError);
}

TEST_CASE("decode outputs file carries ranks in the n-best variant") {
  TwoPassModel model = tiny_model(201);
  std::vector<Utterance> corpus = tiny_corpus(202, 3);
  CorpusDecodeConfig cfg;
  cfg.kind = DecodeKind::kFirstPass;
  cfg.decode.b1 = 2;
  std::vector<DecodeOutput> outputs = decode_corpus(model, corpus, cfg);
  Vocab vocab = Vocab::with_content_symbols(2);
  write_decode_outputs(outputs, vocab, false, "/tmp/twopass_top1.tsv");
  write_decode_outputs(outputs, vocab, true, "/tmp/twopass_nbest.tsv");
  std::ifstream top1("/tmp/twopass_top1.tsv");
  std::string line;
  int top1_lines = 0;
  while (std::getline(top1, line)) {
    ++top1_lines;
    CHECK(std::count(line.begin(), line.end(), '\t') == 2);
  }
  CHECK(top1_lines == 3);
  std::ifstream nbest("/tmp/twopass_nbest.tsv");
  int nbest_lines = 0;
  while (std::getline(nbest, line)) {
    ++nbest_lines;
    CHECK(std::count(line.begin(), line.end(), '\t') == 3);
  }
  CHECK(nbest_lines >= top1_lines);
}

TEST_CASE("decode_corpus is identical at every thread count") {
  TwoPassModel model = tiny_model(211);
  std::vector<Utterance> corpus = tiny_corpus(212, 6);
  CorpusDecodeConfig cfg;
  cfg.kind = DecodeKind::kBeamSearch;
  cfg.decode.b1 = 2;
  cfg.decode.b2 = 2;
  cfg.decode.num_hyps = 2;
  cfg.threads = 1;
  std::vector<DecodeOutput> a = decode_corpus(model, corpus, cfg);
  cfg.threads = 3;
  std::vector<DecodeOutput> b = decode_corpus(model, corpus, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].nbest.size() == b[i].nbest.size());
    for (std::size_t r = 0; r < a[i].nbest.size(); ++r) {
      CHECK(a[i].nbest.hyps[r].tokens == b[i].nbest.hyps[r].tokens);
      CHECK(a[i].nbest.hyps[r].log_prob == b[i].nbest.hyps[r].log_prob);
    }
  }
}

TEST_CASE("ablation suite: row count, baseline consistency, report header") {
  TwoPassModel model = tiny_model(221);
  std::vector<Utterance> corpus = tiny_corpus(222, 5);

  AblationModels models;
  models.first_pass = &model;
  models.delib[{"both", false}] = &model;
  models.delib[{"acoustic", false}] = &model;

  std::vector<AblationEntry> matrix;
  AblationEntry base;
  base.id = "B0";
  base.first_pass_only = true;
  matrix.push_back(base);
  for (int h : {1, 2}) {
    for (bool rescoring : {false, true}) {
      AblationEntry e;
      e.id = "H" + std::to_string(h) + (rescoring ? "_rescore" : "_beam");
      e.num_hyps = h;
      e.mode = AttentionMode::kBoth;
      e.rescoring = rescoring;
      matrix.push_back(e);
    }
  }
  AblationEntry ac;
  ac.id = "AC";
  ac.mode = AttentionMode::kAcousticsOnly;
  ac.num_hyps = 2;
  matrix.push_back(ac);

  std::vector<AblationRow> rows =
      run_ablation_suite(corpus, models, matrix, 2, 2, 2);
  CHECK(rows.size() == matrix.size());

  // the first-pass row equals a direct first-pass evaluation
  CorpusDecodeConfig direct;
  direct.kind = DecodeKind::kFirstPass;
  direct.decode.b1 = 2;
  const double direct_wer =
      corpus_wer(corpus, decode_corpus(model, corpus, direct));
  CHECK(rows[0].wer == direct_wer);
  CHECK(rows[0].decode == "first-pass");
  for (const AblationRow& r : rows) CHECK(r.gflops >= 0.0);

  const std::string csv = report_csv(rows);
  CHECK(csv.rfind("config_id,mode,H,AE,decode,wer,gflops\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<long>(rows.size()) + 1);

  // a matrix entry without its checkpoint is an error
  AblationEntry text;
  text.id = "TX";
  text.mode = AttentionMode::kTextOnly;
  CHECK_THROWS_AS(models.for_entry(text), ValueError);
}

TEST_CASE("default ablation matrix covers the full grid") {
  std::vector<AblationEntry> matrix = default_ablation_matrix();
  CHECK(matrix.size() == 1 + 4 * 3 * 2 * 2);
  CHECK(matrix.front().first_pass_only);
}

TEST_CASE("flops inputs derived from a model count the right groups") {
  TwoPassModel model = tiny_model(231);
  FlopsInput in = flops_input_from_model(model, 5.0, 2.0, 2.0, 7.0);
  double embed = 0, hyp = 0, dec = 0, attn = 0;
  for (const ParamSet::Entry& e : model.delib.items) {
    const double n = static_cast<double>(e.t.numel());
    if (e.name.rfind("embed", 0) == 0) embed += n;
    if (e.name.rfind("hyp.", 0) == 0) hyp += n;
    if (e.name.rfind("dec.", 0) == 0) dec += n;
    if (e.name.rfind("attn.", 0) == 0) attn += n;
  }
  CHECK(in.m_b == embed + hyp);
  CHECK(in.m_d == dec);
  CHECK(in.text.source_params + in.text.query_params +
            in.acoustic.source_params + in.acoustic.query_params ==
        attn);
  CHECK(in.l_pad == model.delib_cfg.l_pad);
}
