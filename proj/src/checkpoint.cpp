#include "stylescope/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

#include <json.hpp>

#include "stylescope/error.hpp"

namespace stylescope {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;

constexpr char kRawMagic[8] = {'S', 'S', 'C', 'K', 'P', 'T', '0', '1'};

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CheckpointFormatError("truncated header");
  return v;
}

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::size_t numel_of(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw CheckpointFormatError("negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = (h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // subnormal half -> normal float
      float f = std::ldexp(static_cast<float>(mant), -24);
      bits = std::bit_cast<std::uint32_t>(f) | sign;
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 112) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},       {"d_model", c.d_model},
          {"d_mlp", c.d_mlp},       {"vocab_size", c.vocab_size}, {"n_ctx", c.n_ctx},
          {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_mlp = j.at("d_mlp").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_ctx = j.at("n_ctx").get<int>();
  c.layer_norm_eps = j.value("layer_norm_eps", 1e-5f);
  return c;
}

// Strips "transformer." and drops non-weight buffers.
TensorMap normalize_names(const TensorMap& in) {
  static const std::regex mask_buffer(R"(^h\.\d+\.attn\.(bias|masked_bias)$)");
  TensorMap out;
  for (const auto& [name, t] : in) {
    std::string n = name;
    if (n.rfind("transformer.", 0) == 0) n = n.substr(12);
    if (n == "lm_head.weight" || std::regex_match(n, mask_buffer)) continue;
    out.emplace(std::move(n), t);
  }
  return out;
}

const Tensor& require(const TensorMap& m, const std::string& name, std::vector<std::int64_t> shape) {
  auto it = m.find(name);
  if (it == m.end()) throw MissingTensor(name);
  if (it->second.shape != shape) {
    throw ShapeMismatch(name + ": expected " + shape_str(shape) + ", found " + shape_str(it->second.shape));
  }
  for (float v : it->second.values) {
    if (!std::isfinite(v)) throw NonFiniteWeight(name);
  }
  return it->second;
}

std::vector<float> vec(const TensorMap& m, const std::string& name, std::int64_t n) {
  return require(m, name, {n}).values;
}

Matrix as_matrix(const TensorMap& m, const std::string& name, std::int64_t rows, std::int64_t cols) {
  Matrix out;
  out.rows = static_cast<std::size_t>(rows);
  out.cols = static_cast<std::size_t>(cols);
  out.data = require(m, name, {rows, cols}).values;
  return out;
}

// Checkpoint (in, out) -> internal (out, in).
Matrix transposed(const TensorMap& m, const std::string& name, std::int64_t in, std::int64_t out) {
  const Tensor& t = require(m, name, {in, out});
  Matrix w(static_cast<std::size_t>(out), static_cast<std::size_t>(in));
  for (std::int64_t i = 0; i < in; ++i) {
    for (std::int64_t o = 0; o < out; ++o) w(o, i) = t.values[i * out + o];
  }
  return w;
}

Tensor tensor_of(const std::vector<float>& v) { return {{static_cast<std::int64_t>(v.size())}, v}; }

Tensor tensor_of(const Matrix& m) {
  return {{static_cast<std::int64_t>(m.rows), static_cast<std::int64_t>(m.cols)}, m.data};
}

Tensor transposed_tensor(const Matrix& w) {
  Tensor t{{static_cast<std::int64_t>(w.cols), static_cast<std::int64_t>(w.rows)}, {}};
  t.values.resize(w.data.size());
  for (std::size_t o = 0; o < w.rows; ++o) {
    for (std::size_t i = 0; i < w.cols; ++i) t.values[i * w.rows + o] = w(o, i);
  }
  return t;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::size_t Tensor::numel() const { return numel_of(shape); }

TensorMap read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::uint64_t header_len = read_u64(in);
  if (header_len == 0 || header_len > (100u << 20)) throw CheckpointFormatError("implausible safetensors header size");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointFormatError("truncated safetensors header");
  json j;
  try {
    j = json::parse(header);
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("bad safetensors header: ") + e.what());
  }
  const std::uint64_t data_start = 8 + header_len;

  TensorMap out;
  for (const auto& [name, info] : j.items()) {
    if (name == "__metadata__") continue;
    const std::string dtype = info.at("dtype").get<std::string>();
    Tensor t;
    t.shape = info.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[1] < offsets[0]) throw CheckpointFormatError(name + ": bad data_offsets");
    const std::size_t n = numel_of(t.shape);
    const std::uint64_t bytes = offsets[1] - offsets[0];
    std::size_t width = dtype == "F32" ? 4 : (dtype == "F16" || dtype == "BF16") ? 2 : 0;
    if (width == 0) throw CheckpointFormatError(name + ": unsupported dtype " + dtype);
    if (bytes != n * width) throw CheckpointFormatError(name + ": payload size does not match shape");

    in.seekg(static_cast<std::streamoff>(data_start + offsets[0]));
    t.values.resize(n);
    if (width == 4) {
      in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(bytes));
    } else {
      std::vector<std::uint16_t> raw(n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
      for (std::size_t i = 0; i < n; ++i) {
        t.values[i] = dtype == "F16" ? half_to_float(raw[i])
                                     : std::bit_cast<float>(static_cast<std::uint32_t>(raw[i]) << 16);
      }
    }
    if (!in) throw CheckpointFormatError(name + ": truncated payload");
    out.emplace(name, std::move(t));
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (t.values.size() != t.numel()) throw ShapeMismatch(name + ": value count does not match shape");
    const std::uint64_t bytes = t.values.size() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string h = header.dump();
  while (h.size() % 8 != 0) h += ' ';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_u64(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 4));
  }
  if (!out) throw IoError("short write to " + path.string());
}

bool is_raw_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, 8);
  return in && std::memcmp(magic, kRawMagic, 8) == 0;
}

RawCheckpoint read_raw_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kRawMagic, 8) != 0) throw CheckpointFormatError("not a raw checkpoint (bad magic)");
  const std::uint64_t header_len = read_u64(in);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointFormatError("truncated raw header");
  json j;
  try {
    j = json::parse(header);
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("bad raw header: ") + e.what());
  }
  const std::uint64_t payload_start = 16 + header_len;

  RawCheckpoint ck;
  ck.config = config_from_json(j.at("config"));
  for (const auto& entry : j.at("tensors")) {
    Tensor t;
    const auto name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    t.values.resize(numel_of(t.shape));
    in.seekg(static_cast<std::streamoff>(payload_start + offset));
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 4));
    if (!in) throw CheckpointFormatError(name + ": truncated payload");
    ck.tensors.emplace(name, std::move(t));
  }
  return ck;
}

void write_raw_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const TensorMap& tensors) {
  json list = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (t.values.size() != t.numel()) throw ShapeMismatch(name + ": value count does not match shape");
    list.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size() * sizeof(float);
  }
  const json header = {{"format", "stylescope-raw"}, {"version", 1}, {"config", config_to_json(config)},
                       {"tensors", list}};
  const std::string h = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kRawMagic, 8);
  write_u64(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 4));
  }
  if (!out) throw IoError("short write to " + path.string());
}

ModelConfig infer_config(const TensorMap& raw, std::optional<int> n_heads) {
  const TensorMap m = normalize_names(raw);
  auto shape_of = [&](const std::string& name) -> const std::vector<std::int64_t>& {
    auto it = m.find(name);
    if (it == m.end()) throw MissingTensor(name);
    return it->second.shape;
  };
  ModelConfig c;
  const auto& wte = shape_of("wte.weight");
  const auto& wpe = shape_of("wpe.weight");
  if (wte.size() != 2 || wpe.size() != 2) throw ShapeMismatch("embedding tensors must be 2-D");
  c.vocab_size = static_cast<int>(wte[0]);
  c.d_model = static_cast<int>(wte[1]);
  c.n_ctx = static_cast<int>(wpe[0]);
  int layers = 0;
  while (m.contains("h." + std::to_string(layers) + ".ln_1.weight")) ++layers;
  c.n_layers = layers;
  const auto& fc = shape_of("h.0.mlp.c_fc.weight");
  if (fc.size() != 2) throw ShapeMismatch("h.0.mlp.c_fc.weight must be 2-D");
  c.d_mlp = static_cast<int>(fc[1]);
  c.n_heads = n_heads.value_or(std::max(1, c.d_model / 64));
  c.validate();
  return c;
}

ModelBundle bundle_from_tensors(const TensorMap& raw, const ModelConfig& config) {
  config.validate();
  const TensorMap m = normalize_names(raw);
  const std::int64_t d = config.d_model, f = config.d_mlp;
  ModelBundle b;
  b.config = config;
  b.token_embedding = as_matrix(m, "wte.weight", config.vocab_size, d);
  b.position_embedding = as_matrix(m, "wpe.weight", config.n_ctx, d);
  b.blocks.resize(config.n_layers);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    auto& blk = b.blocks[l];
    blk.ln1_scale = vec(m, p + "ln_1.weight", d);
    blk.ln1_shift = vec(m, p + "ln_1.bias", d);
    blk.attn_qkv_weight = transposed(m, p + "attn.c_attn.weight", d, 3 * d);
    blk.attn_qkv_bias = vec(m, p + "attn.c_attn.bias", 3 * d);
    blk.attn_out_weight = transposed(m, p + "attn.c_proj.weight", d, d);
    blk.attn_out_bias = vec(m, p + "attn.c_proj.bias", d);
    blk.ln2_scale = vec(m, p + "ln_2.weight", d);
    blk.ln2_shift = vec(m, p + "ln_2.bias", d);
    blk.mlp_in_weight = transposed(m, p + "mlp.c_fc.weight", d, f);
    blk.mlp_in_bias = vec(m, p + "mlp.c_fc.bias", f);
    blk.mlp_out_weight = transposed(m, p + "mlp.c_proj.weight", f, d);
    blk.mlp_out_bias = vec(m, p + "mlp.c_proj.bias", d);
  }
  b.final_ln_scale = vec(m, "ln_f.weight", d);
  b.final_ln_shift = vec(m, "ln_f.bias", d);
  b.validate();
  return b;
}

TensorMap tensors_from_bundle(const ModelBundle& b) {
  TensorMap m;
  m["wte.weight"] = tensor_of(b.token_embedding);
  m["wpe.weight"] = tensor_of(b.position_embedding);
  for (std::size_t l = 0; l < b.blocks.size(); ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    const auto& blk = b.blocks[l];
    m[p + "ln_1.weight"] = tensor_of(blk.ln1_scale);
    m[p + "ln_1.bias"] = tensor_of(blk.ln1_shift);
    m[p + "attn.c_attn.weight"] = transposed_tensor(blk.attn_qkv_weight);
    m[p + "attn.c_attn.bias"] = tensor_of(blk.attn_qkv_bias);
    m[p + "attn.c_proj.weight"] = transposed_tensor(blk.attn_out_weight);
    m[p + "attn.c_proj.bias"] = tensor_of(blk.attn_out_bias);
    m[p + "ln_2.weight"] = tensor_of(blk.ln2_scale);
    m[p + "ln_2.bias"] = tensor_of(blk.ln2_shift);
    m[p + "mlp.c_fc.weight"] = transposed_tensor(blk.mlp_in_weight);
    m[p + "mlp.c_fc.bias"] = tensor_of(blk.mlp_in_bias);
    m[p + "mlp.c_proj.weight"] = transposed_tensor(blk.mlp_out_weight);
    m[p + "mlp.c_proj.bias"] = tensor_of(blk.mlp_out_bias);
  }
  m["ln_f.weight"] = tensor_of(b.final_ln_scale);
  m["ln_f.bias"] = tensor_of(b.final_ln_shift);
  return m;
}

ModelBundle load_checkpoint(const std::filesystem::path& path, std::optional<ModelConfig> config) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  if (is_raw_checkpoint(path)) {
    RawCheckpoint ck = read_raw_checkpoint(path);
    if (config && !(*config == ck.config)) {
      throw ShapeMismatch("raw checkpoint config does not match the requested config");
    }
    return bundle_from_tensors(ck.tensors, ck.config);
  }
  TensorMap tensors = read_safetensors(path);
  const ModelConfig cfg = config ? *config : infer_config(tensors);
  return bundle_from_tensors(tensors, cfg);
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> gpt2_tensor_layout(const ModelConfig& c) {
  const std::int64_t d = c.d_model, f = c.d_mlp;
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
  out.push_back({"wte.weight", {c.vocab_size, d}});
  out.push_back({"wpe.weight", {c.n_ctx, d}});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    out.push_back({p + "ln_1.weight", {d}});
    out.push_back({p + "ln_1.bias", {d}});
    out.push_back({p + "attn.c_attn.weight", {d, 3 * d}});
    out.push_back({p + "attn.c_attn.bias", {3 * d}});
    out.push_back({p + "attn.c_proj.weight", {d, d}});
    out.push_back({p + "attn.c_proj.bias", {d}});
    out.push_back({p + "ln_2.weight", {d}});
    out.push_back({p + "ln_2.bias", {d}});
    out.push_back({p + "mlp.c_fc.weight", {d, f}});
    out.push_back({p + "mlp.c_fc.bias", {f}});
    out.push_back({p + "mlp.c_proj.weight", {f, d}});
    out.push_back({p + "mlp.c_proj.bias", {d}});
  }
  out.push_back({"ln_f.weight", {d}});
  out.push_back({"ln_f.bias", {d}});
  return out;
}

TensorMap synthetic_checkpoint(const ModelConfig& config, std::uint64_t seed, const SyntheticScales& s) {
  config.validate();
  auto role_of = [&](const std::string& name) -> std::pair<float, bool> {
    auto ends = [&](std::string_view suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (name == "wte.weight") return {s.token_embedding, false};
    if (name == "wpe.weight") return {s.position_embedding, false};
    if (ends("ln_1.weight") || ends("ln_2.weight") || name == "ln_f.weight") return {s.ln_weight, true};
    if (ends("ln_1.bias") || ends("ln_2.bias") || name == "ln_f.bias") return {s.ln_bias, false};
    if (ends("attn.c_attn.weight")) return {s.attn_weight, false};
    if (ends("attn.c_proj.weight")) return {s.attn_proj_weight, false};
    if (ends("mlp.c_fc.weight")) return {s.mlp_in_weight, false};
    if (ends("mlp.c_proj.weight")) return {s.mlp_out_weight, false};
    return {s.bias, false};
  };

  TensorMap out;
  std::uint64_t g = 0;
  for (const auto& [name, shape] : gpt2_tensor_layout(config)) {
    const auto [half_width, around_one] = role_of(name);
    const float amp = 2.0f * half_width;
    Tensor t{shape, std::vector<float>(numel_of(shape))};
    for (float& v : t.values) {
      ++g;
      const std::uint64_t z = splitmix64(seed + g * 0x9E3779B97F4A7C15ull);
      const float u = static_cast<float>(z >> 40) * 0x1p-24f;
      v = (u - 0.5f) * amp;
      if (around_one) v = 1.0f + v;
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace stylescope
