#include "twopass/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "twopass/checkpoint.hpp"
#include "twopass/config.hpp"
#include "twopass/report.hpp"

namespace twopass {

namespace {

// Binds CLI flags to resolver keys so precedence is flag > file > default.
class FlagMap {
 public:
  FlagMap(CLI::App* cmd, ConfigResolver* resolver)
      : cmd_(cmd), resolver_(resolver) {
    cmd_->add_option("--config", config_path_,
                     "config file with key = value lines");
  }

  void add(const std::string& key, const std::string& flag,
           const std::string& desc) {
    auto slot = std::make_unique<std::string>();
    options_.emplace_back(key, cmd_->add_option(flag, *slot, desc));
    storage_.push_back(std::move(slot));
  }

  // file first, then explicit flags on top
  void resolve() {
    if (!config_path_.empty()) resolver_->load_file(config_path_);
    for (std::size_t i = 0; i < options_.size(); ++i) {
      if (options_[i].second->count() > 0) {
        resolver_->set_flag(options_[i].first, *storage_[i]);
      }
    }
  }

 private:
  CLI::App* cmd_;
  ConfigResolver* resolver_;
  std::string config_path_;
  std::vector<std::unique_ptr<std::string>> storage_;
  std::vector<std::pair<std::string, CLI::Option*>> options_;
};

GenConfig gen_config_from(const ConfigResolver& r) {
  GenConfig g;
  g.min_len = r.get_int("min_len");
  g.max_len = r.get_int("max_len");
  g.frames_per_token = r.get_int("frames_per_token");
  g.noise_sigma = r.get_double("noise_sigma");
  g.feat_dim = r.get_int("feat_dim");
  g.signature_seed = r.get_u64("signature_seed");
  return g;
}

void define_arch_keys(ConfigResolver& r) {
  r.define("feat_dim", "8");
  r.define("stack_prev", "1");
  r.define("stride", "2");
  r.define("enc_layers", "2");
  r.define("enc_hidden", "32");
  r.define("enc_proj", "16");
  r.define("reduce_after", "1");
  r.define("reduce_factor", "2");
  r.define("vocab_size", "16");
  r.define("rnnt_embed", "16");
  r.define("pred_layers", "1");
  r.define("pred_hidden", "32");
  r.define("pred_proj", "16");
  r.define("joint_hidden", "32");
  r.define("delib_embed", "16");
  r.define("hyp_hidden", "32");
  r.define("ae", "off");
  r.define("ae_layers", "2");
  r.define("attn_dim", "16");
  r.define("heads", "4");
  r.define("dec_hidden", "32");
  r.define("lpad", "24");
}

void add_arch_flags(FlagMap& flags) {
  flags.add("feat_dim", "--feat-dim", "feature dimension");
  flags.add("stack_prev", "--stack-prev", "previous frames stacked per frame");
  flags.add("stride", "--stride", "frontend downsampling stride");
  flags.add("enc_layers", "--enc-layers", "encoder LSTM layers");
  flags.add("enc_hidden", "--enc-hidden", "encoder LSTM width");
  flags.add("enc_proj", "--enc-proj", "encoder projection width");
  flags.add("reduce_after", "--reduce-after", "time reduction after layer");
  flags.add("reduce_factor", "--reduce-factor", "time reduction factor");
  flags.add("vocab_size", "--vocab-size", "content symbols in the vocab");
  flags.add("rnnt_embed", "--rnnt-embed", "prediction net embedding width");
  flags.add("pred_layers", "--pred-layers", "prediction net layers");
  flags.add("pred_hidden", "--pred-hidden", "prediction net LSTM width");
  flags.add("pred_proj", "--pred-proj", "prediction net projection width");
  flags.add("joint_hidden", "--joint-hidden", "joint network width");
  flags.add("delib_embed", "--delib-embed", "second-pass embedding width");
  flags.add("hyp_hidden", "--hyp-hidden", "hypothesis encoder width/direction");
  flags.add("ae", "--ae-train", "build the additional encoder (on/off)");
  flags.add("ae_layers", "--ae-layers", "additional encoder layers");
  flags.add("attn_dim", "--attn-dim", "attention width");
  flags.add("heads", "--heads", "attention heads");
  flags.add("dec_hidden", "--dec-hidden", "second-pass decoder width");
  flags.add("lpad", "--lpad", "padded hypothesis length");
}

FrontendConfig frontend_from(const ConfigResolver& r) {
  FrontendConfig f;
  f.feat_dim = r.get_int("feat_dim");
  f.stack_prev = r.get_int("stack_prev");
  f.stride = r.get_int("stride");
  return f;
}

EncoderConfig encoder_from(const ConfigResolver& r) {
  EncoderConfig e;
  e.input_dim = frontend_from(r).input_dim();
  e.layers = r.get_int("enc_layers");
  e.hidden = r.get_int("enc_hidden");
  e.proj = r.get_int("enc_proj");
  e.reduce_after_layer = r.get_int("reduce_after");
  e.reduce_factor = r.get_int("reduce_factor");
  return e;
}

RnntConfig rnnt_from(const ConfigResolver& r) {
  RnntConfig c;
  c.vocab_size = r.get_int("vocab_size") + Vocab::kNumReserved;
  c.embed_dim = r.get_int("rnnt_embed");
  c.pred_layers = r.get_int("pred_layers");
  c.pred_hidden = r.get_int("pred_hidden");
  c.pred_proj = r.get_int("pred_proj");
  c.joint_hidden = r.get_int("joint_hidden");
  c.enc_dim = encoder_from(r).output_dim();
  return c;
}

DeliberationConfig delib_from(const ConfigResolver& r) {
  DeliberationConfig d;
  d.vocab_size = r.get_int("vocab_size") + Vocab::kNumReserved;
  d.embed_dim = r.get_int("delib_embed");
  d.hyp_hidden = r.get_int("hyp_hidden");
  d.enc_dim = encoder_from(r).output_dim();
  d.use_ae = r.get_bool("ae");
  d.ae_layers = r.get_int("ae_layers");
  d.attn_dim = r.get_int("attn_dim");
  d.heads = r.get_int("heads");
  d.dec_hidden = r.get_int("dec_hidden");
  d.l_pad = r.get_int("lpad");
  d.num_hyps = r.get_int("hyps");
  return d;
}

// decode-time AE toggle: auto follows the checkpoint, on requires AE params
bool resolve_ae(const std::string& value, const TwoPassModel& model) {
  if (value == "auto") return model.has_delib && model.delib_cfg.use_ae;
  if (value == "on" || value == "true" || value == "1") {
    if (!model.has_delib || !model.delib_cfg.use_ae) {
      throw ValueError("--ae on, but the checkpoint has no AE parameters");
    }
    return true;
  }
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("option 'ae': expected on/off/auto, got '" + value + "'");
}

// ---- gen-data -----------------------------------------------------------

int cmd_gen_data(ConfigResolver& r, std::ostream& out) {
  const std::uint64_t seed = r.get_u64("seed");
  const int count = r.get_int("count");
  if (count < 0) throw ConfigError("option 'count': must be >= 0");
  Vocab vocab = Vocab::with_content_symbols(r.get_int("vocab_size"));
  std::vector<Utterance> corpus =
      generate_corpus(seed, count, vocab, gen_config_from(r),
                      r.get_int("threads"));
  write_corpus(corpus, r.get("out"));
  if (!r.get("vocab_out").empty()) write_vocab(vocab, r.get("vocab_out"));
  out << "wrote " << corpus.size() << " utterances to " << r.get("out")
      << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(ConfigResolver& r, std::ostream& out) {
  const TrainStage stage = train_stage_from_string(r.get("stage"));
  const std::uint64_t seed = r.get_u64("seed");
  std::vector<Utterance> corpus = read_corpus(r.get("corpus"));

  TwoPassModel model;
  const std::string init = r.get("init");
  if (!init.empty()) {
    model = load_checkpoint(init);
  } else {
    if (stage == TrainStage::kDelibCe || stage == TrainStage::kMwer) {
      throw ValueError("stage " + to_string(stage) +
                       " needs --init with a first-pass checkpoint");
    }
    model = make_first_pass_model(frontend_from(r), encoder_from(r),
                                  rnnt_from(r), seed);
  }
  if ((stage == TrainStage::kDelibCe || stage == TrainStage::kJoint) &&
      !model.has_delib) {
    add_deliberation(model, delib_from(r), seed + 0x5eed);
  }
  if (stage == TrainStage::kMwer && !model.has_delib) {
    throw ValueError("stage mwer needs a checkpoint with a second pass");
  }

  TrainConfig cfg;
  cfg.stage = stage;
  cfg.steps = r.get_int("steps");
  cfg.batch = r.get_int("batch");
  cfg.lr = r.get_double("lr");
  cfg.seed = seed;
  cfg.alpha = r.get_double("alpha");
  cfg.lambda = r.get_double("lambda");
  cfg.b_mwer = r.get_int("bmwer");
  cfg.num_hyps = r.get_int("hyps");
  cfg.mode = attention_mode_from_string(r.get("attention"));
  cfg.threads = r.get_int("threads");

  std::ofstream log_file;
  const std::string log_path = r.get("log");
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::binary);
    if (!log_file) throw FormatError("cannot open training log: " + log_path);
    log_file << train_log_header() << '\n';
  }
  const int echo_every = std::max(1, cfg.steps / 10);
  LogSink sink = [&](const TrainLogRow& row) {
    if (log_file.is_open()) log_file << format_log_row(row) << '\n';
    if (row.step % echo_every == 0 || row.step + 1 == cfg.steps) {
      out << "step " << row.step << " " << row.stage << " loss " << row.loss
          << "\n";
    }
  };
  train(model, corpus, cfg, sink);
  save_checkpoint(model, r.get("out"));
  out << "saved checkpoint to " << r.get("out") << "\n";
  return 0;
}

// ---- decode / eval ----------------------------------------------------------

CorpusDecodeConfig decode_config_from(const ConfigResolver& r,
                                      const TwoPassModel& model) {
  CorpusDecodeConfig cfg;
  const std::string mode = r.get("mode");
  if (mode == "beam") {
    cfg.kind = DecodeKind::kBeamSearch;
  } else if (mode == "rescore") {
    cfg.kind = DecodeKind::kRescoring;
  } else if (mode == "first") {
    cfg.kind = DecodeKind::kFirstPass;
  } else {
    throw ConfigError("option 'mode': expected beam/rescore/first, got '" +
                      mode + "'");
  }
  cfg.decode.b1 = r.get_int("b1");
  cfg.decode.b2 = r.get_int("b2");
  cfg.decode.num_hyps = r.get_int("hyps");
  cfg.decode.mode = attention_mode_from_string(r.get("attention"));
  cfg.decode.use_ae = resolve_ae(r.get("ae"), model);
  cfg.decode.length_normalize = r.get_bool("len_norm");
  cfg.threads = r.get_int("threads");
  return cfg;
}

int cmd_decode(ConfigResolver& r, std::ostream& out) {
  std::vector<Utterance> corpus = read_corpus(r.get("corpus"));
  Vocab vocab = read_vocab(r.get("vocab"));
  TwoPassModel model = load_checkpoint(r.get("ckpt"));
  if (vocab.size() != model.rnnt_cfg.vocab_size) {
    throw ValueError("vocab file size does not match the checkpoint");
  }
  CorpusDecodeConfig cfg = decode_config_from(r, model);
  if (cfg.kind != DecodeKind::kFirstPass && !model.has_delib) {
    throw ValueError("checkpoint has no second pass; use --mode first");
  }
  std::vector<DecodeOutput> outputs = decode_corpus(model, corpus, cfg);
  write_decode_outputs(outputs, vocab, r.get_bool("nbest"), r.get("out"));
  out << "decoded " << outputs.size() << " utterances to " << r.get("out")
      << "\n";
  return 0;
}

std::vector<TokenSeq> parse_decode_file(const std::string& path,
                                        const Vocab& vocab) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open decode output: " + path);
  std::map<std::string, TokenId> by_symbol;
  for (int i = 0; i < vocab.size(); ++i) by_symbol[vocab.symbol(i)] = i;
  std::vector<TokenSeq> hyps;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 && fields.size() != 4) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected 3 or 4 tab-separated fields");
    }
    const bool nbest = fields.size() == 4;
    if (nbest && fields[1] != "0") continue;  // keep top-1 lines only
    const std::string& tokens = nbest ? fields[2] : fields[1];
    TokenSeq seq;
    std::stringstream ts(tokens);
    std::string sym;
    while (ts >> sym) {
      auto it = by_symbol.find(sym);
      if (it == by_symbol.end()) {
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": unknown symbol '" + sym + "'");
      }
      seq.push_back(it->second);
    }
    hyps.push_back(std::move(seq));
  }
  return hyps;
}

int cmd_eval(ConfigResolver& r, std::ostream& out) {
  std::vector<Utterance> corpus = read_corpus(r.get("corpus"));
  Vocab vocab = read_vocab(r.get("vocab"));
  std::vector<TokenSeq> hyps = parse_decode_file(r.get("hyps"), vocab);
  std::vector<TokenSeq> refs;
  refs.reserve(corpus.size());
  for (const Utterance& u : corpus) refs.push_back(u.reference);
  const double wer = compute_wer(refs, hyps);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "wer = %.6f (%.2f%%)", wer, 100.0 * wer);
  out << buf << "\n";
  return 0;
}

// ---- flops ----------------------------------------------------------------

int cmd_flops(ConfigResolver& r, std::ostream& out) {
  FlopsInput in;
  in.m_b = r.get_double("mb");
  in.m_d = r.get_double("md");
  in.n = r.get_double("n");
  in.h = r.get_double("h");
  in.b = r.get_double("b");
  in.t_frames = r.get_double("frames");
  in.l_pad = r.get_double("lpad");
  const double attn = r.get_double("attn_params");
  // two layers, each split evenly between source and query projections
  in.acoustic.source_params = attn / 4.0;
  in.acoustic.query_params = attn / 4.0;
  in.text.source_params = attn / 4.0;
  in.text.query_params = attn / 4.0;
  const double flops = estimate_flops(in);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "GFLOPS = %.3f", flops / 1e9);
  out << buf << "\n";
  return 0;
}

// ---- heatmap ------------------------------------------------------------

int cmd_heatmap(ConfigResolver& r, std::ostream& out) {
  std::vector<Utterance> corpus = read_corpus(r.get("corpus"));
  Vocab vocab = read_vocab(r.get("vocab"));
  TwoPassModel model = load_checkpoint(r.get("ckpt"));
  if (!model.has_delib) {
    throw ValueError("heatmap needs a checkpoint with a second pass");
  }
  const int utt = r.get_int("utt");
  if (utt < 0 || utt >= static_cast<int>(corpus.size())) {
    throw ValueError("utterance index " + std::to_string(utt) +
                     " outside the corpus");
  }
  TwoPassDecodeConfig cfg;
  cfg.b1 = r.get_int("b1");
  cfg.b2 = r.get_int("b2");
  cfg.num_hyps = r.get_int("hyps");
  cfg.mode = attention_mode_from_string(r.get("attention"));
  cfg.use_ae = resolve_ae(r.get("ae"), model);
  TwoPassResult result =
      decode_two_pass(model, corpus[static_cast<std::size_t>(utt)].frames, cfg);

  std::vector<std::string> output_labels;
  for (TokenId t : result.top_labels) output_labels.push_back(vocab.symbol(t));
  const std::string prefix = r.get("out");
  if (!result.text_attention.empty()) {
    std::vector<std::string> source_labels;
    for (TokenId t : result.hb_tokens) source_labels.push_back(vocab.symbol(t));
    export_heatmap_csv(result.text_attention.averaged, source_labels,
                       output_labels, prefix + ".csv");
    export_heatmap_pgm(result.text_attention.averaged, prefix + ".pgm");
    out << "wrote " << prefix << ".csv and " << prefix << ".pgm\n";
  }
  if (!result.acoustic_attention.empty()) {
    std::vector<std::string> source_labels;
    for (Eigen::Index i = 0; i < result.acoustic_attention.averaged.cols();
         ++i) {
      source_labels.push_back("t" + std::to_string(i));
    }
    export_heatmap_csv(result.acoustic_attention.averaged, source_labels,
                       output_labels, prefix + "_acoustic.csv");
    export_heatmap_pgm(result.acoustic_attention.averaged,
                       prefix + "_acoustic.pgm");
    out << "wrote " << prefix << "_acoustic.csv and " << prefix
        << "_acoustic.pgm\n";
  }
  return 0;
}

// ---- ablate ---------------------------------------------------------------

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_ablate(ConfigResolver& r, std::ostream& out) {
  std::vector<Utterance> corpus = read_corpus(r.get("corpus"));
  TwoPassModel first_pass = load_checkpoint(r.get("rnnt"));

  std::vector<AblationEntry> matrix;
  if (r.get_bool("first_pass_row")) {
    AblationEntry base;
    base.id = "B0";
    base.first_pass_only = true;
    matrix.push_back(base);
  }
  for (const std::string& h : split_list(r.get("hyps_list"))) {
    for (const std::string& mode : split_list(r.get("modes"))) {
      for (const std::string& ae : split_list(r.get("ae_list"))) {
        for (const std::string& dec : split_list(r.get("decode_list"))) {
          AblationEntry e;
          e.num_hyps = std::stoi(h);
          e.mode = attention_mode_from_string(mode);
          e.ae = ae == "1" || ae == "on";
          e.rescoring = dec == "rescore";
          e.id = "H" + h + "_" + to_string(e.mode) + "_ae" +
                 (e.ae ? "1" : "0") + "_" + (e.rescoring ? "rescore" : "beam");
          matrix.push_back(e);
        }
      }
    }
  }

  // one checkpoint per (mode, AE) pair, by naming convention
  const std::string dir = r.get("ckpt_dir");
  std::map<std::pair<std::string, bool>, TwoPassModel> loaded;
  AblationModels models;
  models.first_pass = &first_pass;
  for (const AblationEntry& e : matrix) {
    if (e.first_pass_only) continue;
    const auto key = std::make_pair(to_string(e.mode), e.ae);
    if (!loaded.count(key)) {
      const std::string path = dir + "/delib_" + key.first + "_ae" +
                               (e.ae ? "1" : "0") + ".ckpt";
      loaded[key] = load_checkpoint(path);
    }
  }
  for (const auto& [key, model] : loaded) models.delib[key] = &model;

  std::vector<AblationRow> rows =
      run_ablation_suite(corpus, models, matrix, r.get_int("b1"),
                         r.get_int("b2"), r.get_int("threads"));
  const std::string csv = report_csv(rows);
  std::ofstream f(r.get("out"), std::ios::binary);
  if (!f) throw FormatError("cannot open report for writing: " + r.get("out"));
  f << csv;
  out << csv;
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"two-pass deliberation sequence transduction workbench"};
  app.require_subcommand(1);

  // gen-data ------------------------------------------------------------
  ConfigResolver gen_r("gen-data");
  gen_r.require("seed");
  gen_r.require("out");
  gen_r.define("vocab_out", "");
  gen_r.define("count", "1000");
  gen_r.define("min_len", "2");
  gen_r.define("max_len", "10");
  gen_r.define("frames_per_token", "2");
  gen_r.define("noise_sigma", "0");
  gen_r.define("feat_dim", "8");
  gen_r.define("vocab_size", "16");
  gen_r.define("signature_seed", "1234");
  gen_r.define("threads", "1");
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  FlagMap gen_flags(gen_cmd, &gen_r);
  gen_flags.add("seed", "--seed", "corpus seed (required)");
  gen_flags.add("out", "--out", "corpus output path (required)");
  gen_flags.add("vocab_out", "--vocab-out", "vocab output path");
  gen_flags.add("count", "--count", "number of utterances");
  gen_flags.add("min_len", "--min-len", "min reference length");
  gen_flags.add("max_len", "--max-len", "max reference length");
  gen_flags.add("frames_per_token", "--frames-per-token", "frames per token");
  gen_flags.add("noise_sigma", "--noise-sigma", "frame noise stddev");
  gen_flags.add("feat_dim", "--feat-dim", "feature dimension");
  gen_flags.add("vocab_size", "--vocab-size", "content symbols");
  gen_flags.add("signature_seed", "--signature-seed", "token signature seed");
  gen_flags.add("threads", "--threads", "worker threads");

  // train ---------------------------------------------------------------
  ConfigResolver train_r("train");
  train_r.require("stage");
  train_r.require("corpus");
  train_r.require("seed");
  train_r.require("out");
  train_r.define("init", "");
  train_r.define("log", "");
  train_r.define("steps", "200");
  train_r.define("batch", "4");
  train_r.define("lr", "0.2");
  train_r.define("alpha", "0.01");
  train_r.define("lambda", "1.0");
  train_r.define("bmwer", "4");
  train_r.define("hyps", "8");
  train_r.define("attention", "both");
  train_r.define("threads", "1");
  define_arch_keys(train_r);
  CLI::App* train_cmd = app.add_subcommand("train", "run a training stage");
  FlagMap train_flags(train_cmd, &train_r);
  train_flags.add("stage", "--stage", "rnnt|delib-ce|mwer|joint (required)");
  train_flags.add("corpus", "--corpus", "training corpus (required)");
  train_flags.add("seed", "--seed", "training seed (required)");
  train_flags.add("out", "--out", "checkpoint output path (required)");
  train_flags.add("init", "--init", "initial checkpoint");
  train_flags.add("log", "--log", "training log CSV path");
  train_flags.add("steps", "--steps", "gradient steps");
  train_flags.add("batch", "--batch", "batch size");
  train_flags.add("lr", "--lr", "learning rate");
  train_flags.add("alpha", "--alpha", "MWER cross-entropy weight");
  train_flags.add("lambda", "--lambda", "joint cross-entropy weight");
  train_flags.add("bmwer", "--bmwer", "MWER training beam");
  train_flags.add("hyps", "--hyps", "hypotheses fed to the second pass");
  train_flags.add("attention", "--attention", "both|acoustic|text");
  train_flags.add("threads", "--threads", "worker threads");
  add_arch_flags(train_flags);

  // decode --------------------------------------------------------------
  ConfigResolver decode_r("decode");
  decode_r.require("corpus");
  decode_r.require("ckpt");
  decode_r.require("vocab");
  decode_r.require("out");
  decode_r.define("mode", "beam");
  decode_r.define("attention", "both");
  decode_r.define("hyps", "8");
  decode_r.define("ae", "auto");
  decode_r.define("b1", "8");
  decode_r.define("b2", "8");
  decode_r.define("nbest", "off");
  decode_r.define("len_norm", "off");
  decode_r.define("threads", "1");
  decode_r.define("seed", "0");
  CLI::App* decode_cmd = app.add_subcommand("decode", "decode a corpus");
  FlagMap decode_flags(decode_cmd, &decode_r);
  decode_flags.add("corpus", "--corpus", "corpus path (required)");
  decode_flags.add("ckpt", "--ckpt", "checkpoint path (required)");
  decode_flags.add("vocab", "--vocab", "vocab path (required)");
  decode_flags.add("out", "--out", "decode output path (required)");
  decode_flags.add("mode", "--mode", "beam|rescore|first");
  decode_flags.add("attention", "--attention", "both|acoustic|text");
  decode_flags.add("hyps", "--hyps", "hypotheses fed to the second pass");
  decode_flags.add("ae", "--ae", "additional encoder: on|off|auto");
  decode_flags.add("b1", "--b1", "first-pass beam");
  decode_flags.add("b2", "--b2", "second-pass beam");
  decode_flags.add("nbest", "--nbest", "write the n-best variant (on/off)");
  decode_flags.add("len_norm", "--len-norm", "length-normalize scores (on/off)");
  decode_flags.add("threads", "--threads", "worker threads");
  decode_flags.add("seed", "--seed", "seed (recorded in the config echo)");

  // eval ----------------------------------------------------------------
  ConfigResolver eval_r("eval");
  eval_r.require("corpus");
  eval_r.require("hyps");
  eval_r.require("vocab");
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a decode output file");
  FlagMap eval_flags(eval_cmd, &eval_r);
  eval_flags.add("corpus", "--corpus", "corpus path (required)");
  eval_flags.add("hyps", "--hyps", "decode output path (required)");
  eval_flags.add("vocab", "--vocab", "vocab path (required)");

  // flops ---------------------------------------------------------------
  ConfigResolver flops_r("flops");
  flops_r.define("mb", "22e6");
  flops_r.define("md", "42e6");
  flops_r.define("n", "14");
  flops_r.define("h", "8");
  flops_r.define("b", "8");
  flops_r.define("frames", "109");
  flops_r.define("lpad", "120");
  flops_r.define("attn_params", "2e6");
  CLI::App* flops_cmd =
      app.add_subcommand("flops", "estimate second-pass FLOPS");
  // --h is a real option here, so help stays on --help alone
  flops_cmd->set_help_flag("--help", "print help");
  FlagMap flops_flags(flops_cmd, &flops_r);
  flops_flags.add("mb", "--mb", "hypothesis encoder parameters");
  flops_flags.add("md", "--md", "decoder parameters");
  flops_flags.add("n", "--n", "decoded tokens");
  flops_flags.add("h", "--h", "first-pass hypotheses");
  flops_flags.add("b", "--b", "second beam size");
  flops_flags.add("frames", "--frames", "acoustic frames");
  flops_flags.add("lpad", "--lpad", "padded hypothesis length");
  flops_flags.add("attn_params", "--attn-params",
                  "total attention parameters, split evenly");

  // heatmap -------------------------------------------------------------
  ConfigResolver heat_r("heatmap");
  heat_r.require("corpus");
  heat_r.require("ckpt");
  heat_r.require("vocab");
  heat_r.require("out");
  heat_r.define("utt", "0");
  heat_r.define("attention", "both");
  heat_r.define("hyps", "1");
  heat_r.define("ae", "auto");
  heat_r.define("b1", "8");
  heat_r.define("b2", "8");
  CLI::App* heat_cmd =
      app.add_subcommand("heatmap", "export attention probabilities");
  FlagMap heat_flags(heat_cmd, &heat_r);
  heat_flags.add("corpus", "--corpus", "corpus path (required)");
  heat_flags.add("ckpt", "--ckpt", "checkpoint path (required)");
  heat_flags.add("vocab", "--vocab", "vocab path (required)");
  heat_flags.add("out", "--out", "output prefix (required)");
  heat_flags.add("utt", "--utt", "utterance index");
  heat_flags.add("attention", "--attention", "both|acoustic|text");
  heat_flags.add("hyps", "--hyps", "hypotheses fed to the second pass");
  heat_flags.add("ae", "--ae", "additional encoder: on|off|auto");
  heat_flags.add("b1", "--b1", "first-pass beam");
  heat_flags.add("b2", "--b2", "second-pass beam");

  // ablate --------------------------------------------------------------
  ConfigResolver ablate_r("ablate");
  ablate_r.require("corpus");
  ablate_r.require("rnnt");
  ablate_r.require("ckpt_dir");
  ablate_r.require("out");
  ablate_r.define("b1", "8");
  ablate_r.define("b2", "8");
  ablate_r.define("hyps_list", "1,2,4,8");
  ablate_r.define("modes", "both,acoustic,text");
  ablate_r.define("ae_list", "0,1");
  ablate_r.define("decode_list", "beam,rescore");
  ablate_r.define("first_pass_row", "on");
  ablate_r.define("threads", "1");
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "run the ablation matrix");
  FlagMap ablate_flags(ablate_cmd, &ablate_r);
  ablate_flags.add("corpus", "--corpus", "test corpus (required)");
  ablate_flags.add("rnnt", "--rnnt", "first-pass checkpoint (required)");
  ablate_flags.add("ckpt_dir", "--ckpt-dir",
                   "directory with delib_<mode>_ae<0|1>.ckpt files");
  ablate_flags.add("out", "--out", "report CSV path (required)");
  ablate_flags.add("b1", "--b1", "first-pass beam");
  ablate_flags.add("b2", "--b2", "second-pass beam");
  ablate_flags.add("hyps_list", "--hyps-list", "H values, comma separated");
  ablate_flags.add("modes", "--modes", "attention modes, comma separated");
  ablate_flags.add("ae_list", "--ae-list", "AE settings, comma separated");
  ablate_flags.add("decode_list", "--decode-list",
                   "decode kinds, comma separated");
  ablate_flags.add("first_pass_row", "--first-pass-row",
                   "include the baseline row (on/off)");
  ablate_flags.add("threads", "--threads", "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << app.help();
    return 1;
  }

  try {
    if (gen_cmd->parsed()) {
      gen_flags.resolve();
      out << gen_r.resolved_text();
      return cmd_gen_data(gen_r, out);
    }
    if (train_cmd->parsed()) {
      train_flags.resolve();
      out << train_r.resolved_text();
      return cmd_train(train_r, out);
    }
    if (decode_cmd->parsed()) {
      decode_flags.resolve();
      out << decode_r.resolved_text();
      return cmd_decode(decode_r, out);
    }
    if (eval_cmd->parsed()) {
      eval_flags.resolve();
      out << eval_r.resolved_text();
      return cmd_eval(eval_r, out);
    }
    if (flops_cmd->parsed()) {
      flops_flags.resolve();
      out << flops_r.resolved_text();
      return cmd_flops(flops_r, out);
    }
    if (heat_cmd->parsed()) {
      heat_flags.resolve();
      out << heat_r.resolved_text();
      return cmd_heatmap(heat_r, out);
    }
    if (ablate_cmd->parsed()) {
      ablate_flags.resolve();
      out << ablate_r.resolved_text();
      return cmd_ablate(ablate_r, out);
    }
    err << "error: no subcommand\n" << app.help();
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace twopass
