#include "twopass/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace twopass {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw FormatError(std::string("checkpoint truncated at ") + what);
  return v;
}

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is, const char* what) {
  const std::uint32_t n = read_u32(is, what);
  if (n > (1u << 20)) throw FormatError("checkpoint string too long");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError(std::string("checkpoint truncated at ") + what);
  return s;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  write_str(os, name);
  write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.values.data()),
           static_cast<std::streamsize>(sizeof(Scalar) * t.values.size()));
}

ParamSet::Entry read_tensor(std::istream& is) {
  ParamSet::Entry e;
  e.name = read_str(is, "tensor name");
  const std::uint32_t ndim = read_u32(is, "tensor rank");
  if (ndim < 1 || ndim > 2) throw FormatError("checkpoint tensor rank not 1 or 2");
  std::vector<int> shape;
  std::int64_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = read_u32(is, "tensor dim");
    if (d < 1 || d > (1u << 24)) throw FormatError("checkpoint tensor dim invalid");
    shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  const int rows = ndim == 2 ? shape[0] : 1;
  const int cols = ndim == 2 ? shape[1] : shape[0];
  e.t.shape = shape;
  e.t.values.resize(rows, cols);
  is.read(reinterpret_cast<char*>(e.t.values.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * numel));
  if (!is) throw FormatError("checkpoint truncated in tensor data");
  e.t.validate();
  return e;
}

}  // namespace

void save_param_groups(const std::map<std::string, const ParamSet*>& groups,
                       const std::map<std::string, std::string>& config,
                       const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 4);
  write_u32(f, kVersion);
  write_u32(f, static_cast<std::uint32_t>(config.size()));
  for (const auto& [k, v] : config) {
    write_str(f, k);
    write_str(f, v);
  }
  write_u32(f, static_cast<std::uint32_t>(groups.size()));
  for (const auto& [name, set] : groups) {
    write_str(f, name);
    write_u32(f, static_cast<std::uint32_t>(set->items.size()));
    for (const ParamSet::Entry& e : set->items) write_tensor(f, e.name, e.t);
  }
  if (!f) throw FormatError("write failed for checkpoint: " + path);
}

GroupFile load_param_groups(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint has bad magic: " + path);
  }
  const std::uint32_t version = read_u32(f, "version");
  if (version != kVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kVersion) +
                      ")");
  }
  GroupFile out;
  const std::uint32_t n_cfg = read_u32(f, "config count");
  if (n_cfg > (1u << 16)) throw FormatError("checkpoint config count invalid");
  for (std::uint32_t i = 0; i < n_cfg; ++i) {
    std::string k = read_str(f, "config key");
    std::string v = read_str(f, "config value");
    out.config[std::move(k)] = std::move(v);
  }
  const std::uint32_t n_groups = read_u32(f, "group count");
  if (n_groups > (1u << 10)) throw FormatError("checkpoint group count invalid");
  for (std::uint32_t g = 0; g < n_groups; ++g) {
    std::string name = read_str(f, "group name");
    const std::uint32_t n_params = read_u32(f, "param count");
    if (n_params > (1u << 20)) throw FormatError("checkpoint param count invalid");
    ParamSet set;
    for (std::uint32_t p = 0; p < n_params; ++p) {
      set.items.push_back(read_tensor(f));
    }
    out.groups[std::move(name)] = std::move(set);
  }
  return out;
}

namespace {

std::string fmt_int(int v) { return std::to_string(v); }

int cfg_int(const std::map<std::string, std::string>& cfg,
            const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) {
    throw FormatError("checkpoint config missing key: " + key);
  }
  return std::stoi(it->second);
}

}  // namespace

void save_checkpoint(const TwoPassModel& model, const std::string& path) {
  model.validate();
  std::map<std::string, std::string> cfg;
  cfg["feat_dim"] = fmt_int(model.frontend.feat_dim);
  cfg["stack_prev"] = fmt_int(model.frontend.stack_prev);
  cfg["stride"] = fmt_int(model.frontend.stride);
  cfg["enc.layers"] = fmt_int(model.enc_cfg.layers);
  cfg["enc.hidden"] = fmt_int(model.enc_cfg.hidden);
  cfg["enc.proj"] = fmt_int(model.enc_cfg.proj);
  cfg["enc.reduce_after"] = fmt_int(model.enc_cfg.reduce_after_layer);
  cfg["enc.reduce_factor"] = fmt_int(model.enc_cfg.reduce_factor);
  cfg["vocab_size"] = fmt_int(model.rnnt_cfg.vocab_size);
  cfg["rnnt.embed"] = fmt_int(model.rnnt_cfg.embed_dim);
  cfg["rnnt.pred_layers"] = fmt_int(model.rnnt_cfg.pred_layers);
  cfg["rnnt.pred_hidden"] = fmt_int(model.rnnt_cfg.pred_hidden);
  cfg["rnnt.pred_proj"] = fmt_int(model.rnnt_cfg.pred_proj);
  cfg["rnnt.joint_hidden"] = fmt_int(model.rnnt_cfg.joint_hidden);
  cfg["has_delib"] = model.has_delib ? "1" : "0";
  if (model.has_delib) {
    cfg["delib.embed"] = fmt_int(model.delib_cfg.embed_dim);
    cfg["delib.hyp_hidden"] = fmt_int(model.delib_cfg.hyp_hidden);
    cfg["delib.use_ae"] = model.delib_cfg.use_ae ? "1" : "0";
    cfg["delib.ae_layers"] = fmt_int(model.delib_cfg.ae_layers);
    cfg["delib.attn_dim"] = fmt_int(model.delib_cfg.attn_dim);
    cfg["delib.heads"] = fmt_int(model.delib_cfg.heads);
    cfg["delib.dec_hidden"] = fmt_int(model.delib_cfg.dec_hidden);
    cfg["delib.l_pad"] = fmt_int(model.delib_cfg.l_pad);
    cfg["delib.num_hyps"] = fmt_int(model.delib_cfg.num_hyps);
  }
  std::map<std::string, const ParamSet*> groups;
  groups["enc"] = &model.enc;
  groups["rnnt"] = &model.rnnt;
  if (model.has_delib) groups["delib"] = &model.delib;
  save_param_groups(groups, cfg, path);
}

TwoPassModel load_checkpoint(const std::string& path) {
  GroupFile file = load_param_groups(path);
  const auto& cfg = file.config;
  TwoPassModel m;
  m.frontend.feat_dim = cfg_int(cfg, "feat_dim");
  m.frontend.stack_prev = cfg_int(cfg, "stack_prev");
  m.frontend.stride = cfg_int(cfg, "stride");
  m.enc_cfg.input_dim = m.frontend.input_dim();
  m.enc_cfg.layers = cfg_int(cfg, "enc.layers");
  m.enc_cfg.hidden = cfg_int(cfg, "enc.hidden");
  m.enc_cfg.proj = cfg_int(cfg, "enc.proj");
  m.enc_cfg.reduce_after_layer = cfg_int(cfg, "enc.reduce_after");
  m.enc_cfg.reduce_factor = cfg_int(cfg, "enc.reduce_factor");
  m.rnnt_cfg.vocab_size = cfg_int(cfg, "vocab_size");
  m.rnnt_cfg.embed_dim = cfg_int(cfg, "rnnt.embed");
  m.rnnt_cfg.pred_layers = cfg_int(cfg, "rnnt.pred_layers");
  m.rnnt_cfg.pred_hidden = cfg_int(cfg, "rnnt.pred_hidden");
  m.rnnt_cfg.pred_proj = cfg_int(cfg, "rnnt.pred_proj");
  m.rnnt_cfg.joint_hidden = cfg_int(cfg, "rnnt.joint_hidden");
  m.rnnt_cfg.enc_dim = m.enc_cfg.output_dim();
  m.has_delib = cfg_int(cfg, "has_delib") != 0;
  if (m.has_delib) {
    m.delib_cfg.vocab_size = m.rnnt_cfg.vocab_size;
    m.delib_cfg.embed_dim = cfg_int(cfg, "delib.embed");
    m.delib_cfg.hyp_hidden = cfg_int(cfg, "delib.hyp_hidden");
    m.delib_cfg.enc_dim = m.enc_cfg.output_dim();
    m.delib_cfg.use_ae = cfg_int(cfg, "delib.use_ae") != 0;
    m.delib_cfg.ae_layers = cfg_int(cfg, "delib.ae_layers");
    m.delib_cfg.attn_dim = cfg_int(cfg, "delib.attn_dim");
    m.delib_cfg.heads = cfg_int(cfg, "delib.heads");
    m.delib_cfg.dec_hidden = cfg_int(cfg, "delib.dec_hidden");
    m.delib_cfg.l_pad = cfg_int(cfg, "delib.l_pad");
    m.delib_cfg.num_hyps = cfg_int(cfg, "delib.num_hyps");
  }
  auto take = [&](const char* name) -> ParamSet {
    auto it = file.groups.find(name);
    if (it == file.groups.end()) {
      throw FormatError(std::string("checkpoint missing group: ") + name);
    }
    return std::move(it->second);
  };
  m.enc = take("enc");
  m.rnnt = take("rnnt");
  if (m.has_delib) m.delib = take("delib");
  // shape check against the declared architecture
  ParamSet enc_ref = init_encoder_params(m.enc_cfg, 0);
  ParamSet rnnt_ref = init_rnnt_params(m.rnnt_cfg, 0);
  auto check_shapes = [](const ParamSet& got, const ParamSet& ref,
                         const char* group) {
    if (got.items.size() != ref.items.size()) {
      throw FormatError(std::string("checkpoint group ") + group +
                        " has wrong parameter count");
    }
    for (std::size_t i = 0; i < got.items.size(); ++i) {
      if (got.items[i].name != ref.items[i].name ||
          got.items[i].t.shape != ref.items[i].t.shape) {
        throw FormatError(std::string("checkpoint group ") + group +
                          " shape mismatch at " + got.items[i].name);
      }
    }
  };
  check_shapes(m.enc, enc_ref, "enc");
  check_shapes(m.rnnt, rnnt_ref, "rnnt");
  if (m.has_delib) {
    ParamSet delib_ref = init_delib_params(m.delib_cfg, 0);
    check_shapes(m.delib, delib_ref, "delib");
  }
  m.validate();
  return m;
}

}  // namespace twopass
