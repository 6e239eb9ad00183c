#include "stylescope/activations.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "stylescope/error.hpp"

namespace stylescope {

namespace {

constexpr char kMatrixMagic[8] = {'S', 'S', 'A', 'C', 'T', 'M', 'A', 'T'};
constexpr std::uint32_t kMatrixVersion = 1;
constexpr std::uint32_t kDtypeFloat32 = 1;

}  // namespace

std::vector<int> default_extraction_layers() {
  std::vector<int> layers;
  for (int l = 16; l <= 23; ++l) layers.push_back(l);
  return layers;
}

ActivationSet extract_activations(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                  const std::vector<int>& layers, float frequency_threshold) {
  if (chunks.empty()) throw EmptyCorpus("no chunks to extract");
  if (layers.empty()) throw InvalidHookPoint("no layers requested");
  const auto& cfg = bundle.config;
  const std::size_t width = cfg.d_mlp;

  ForwardOptions options;
  for (int l : layers) {
    if (l < 0 || l >= cfg.n_layers) throw InvalidHookPoint("layer " + std::to_string(l) + " outside model");
    options.capture.push_back({l, HookSite::mlp_post_act});
  }
  options.stop_after_layer = *std::max_element(layers.begin(), layers.end());

  std::map<CorpusLabel, std::size_t> rows;
  for (const auto& c : chunks) ++rows[c.label];

  ActivationSet out;
  std::map<CorpusLabel, std::size_t> next_row;
  for (int l : layers) {
    for (const auto& [label, n] : rows) {
      ActivationMatrix m;
      m.layer = l;
      m.label = label;
      m.values = Matrix(n, width);
      m.tokens.threshold = frequency_threshold;
      m.tokens.above.assign(width, 0);
      m.tokens.max.assign(width, -std::numeric_limits<float>::infinity());
      out.emplace(ActivationKey{l, label}, std::move(m));
    }
  }

  for (const auto& chunk : chunks) {
    if (chunk.tokens.empty()) throw EmptyCorpus("chunk " + std::to_string(chunk.index) + " has no tokens");
    const ForwardTrace trace = forward(bundle, chunk.tokens, options);
    const std::size_t row = next_row[chunk.label]++;
    for (int l : layers) {
      const Matrix& acts = trace.at({l, HookSite::mlp_post_act});
      ActivationMatrix& m = out.at({l, chunk.label});
      std::vector<double> sum(width, 0.0);
      for (std::size_t t = 0; t < acts.rows; ++t) {
        const auto r = acts.row(t);
        for (std::size_t i = 0; i < width; ++i) {
          sum[i] += r[i];
          if (r[i] > frequency_threshold) ++m.tokens.above[i];
          m.tokens.max[i] = std::max(m.tokens.max[i], r[i]);
        }
      }
      m.tokens.token_count += acts.rows;
      auto dst = m.values.row(row);
      for (std::size_t i = 0; i < width; ++i) dst[i] = static_cast<float>(sum[i] / static_cast<double>(acts.rows));
    }
  }
  return out;
}

TokenActivationStream::TokenActivationStream(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                             int layer, std::vector<int> neurons)
    : bundle_(bundle), chunks_(chunks), layer_(layer), neurons_(std::move(neurons)) {
  if (layer < 0 || layer >= bundle.config.n_layers) {
    throw InvalidHookPoint("layer " + std::to_string(layer) + " outside model");
  }
  for (int n : neurons_) {
    if (n < 0 || n >= bundle.config.d_mlp) throw InvalidIntervention("neuron " + std::to_string(n) + " >= d_mlp");
  }
}

bool TokenActivationStream::load_next_chunk() {
  while (chunk_ < chunks_.size()) {
    const auto& c = chunks_[chunk_++];
    if (c.tokens.empty()) continue;
    ForwardOptions options;
    options.capture = {{layer_, HookSite::mlp_post_act}};
    options.stop_after_layer = layer_;
    ForwardTrace trace = forward(bundle_, c.tokens, options);
    current_ = std::move(trace.captured.at({layer_, HookSite::mlp_post_act}));
    current_chunk_index_ = c.index;
    row_ = 0;
    neuron_slot_ = 0;
    return true;
  }
  return false;
}

std::optional<TokenActivationRecord> TokenActivationStream::next() {
  if (neurons_.empty()) return std::nullopt;
  while (row_ >= current_.rows) {
    if (!load_next_chunk()) return std::nullopt;
  }
  const int neuron = neurons_[neuron_slot_];
  TokenActivationRecord rec{current_chunk_index_, static_cast<int>(row_), neuron, current_(row_, neuron)};
  if (++neuron_slot_ == neurons_.size()) {
    neuron_slot_ = 0;
    ++row_;
  }
  return rec;
}

TokenActivationStream stream_token_activations(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                               int layer, std::vector<int> neurons) {
  return TokenActivationStream(bundle, chunks, layer, std::move(neurons));
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint64_t rows = m.rows, cols = m.cols;
  out.write(kMatrixMagic, 8);
  out.write(reinterpret_cast<const char*>(&kMatrixVersion), 4);
  out.write(reinterpret_cast<const char*>(&kDtypeFloat32), 4);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * 4));
  if (!out) throw IoError("short write to " + path.string());
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8] = {};
  std::uint32_t version = 0, dtype = 0;
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&dtype), 4);
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  if (!in || std::memcmp(magic, kMatrixMagic, 8) != 0) throw IoError(path.string() + ": not an activation matrix");
  if (version != kMatrixVersion || dtype != kDtypeFloat32) throw IoError(path.string() + ": unsupported version/dtype");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * 4));
  if (!in) throw IoError(path.string() + ": truncated payload");
  return m;
}

std::string activation_file_name(int layer, CorpusLabel label) {
  return "L" + std::to_string(layer) + "_" + std::string(to_string(label)) + ".bin";
}

void save_activation_matrix(const std::filesystem::path& path, const ActivationMatrix& matrix,
                            const std::string& chunk_manifest_hash) {
  write_matrix_file(path, matrix.values);
  nlohmann::json side = {
      {"layer", matrix.layer},
      {"label", std::string(to_string(matrix.label))},
      {"rows", matrix.values.rows},
      {"cols", matrix.values.cols},
      {"dtype", "float32"},
      {"chunk_manifest_hash", chunk_manifest_hash},
      {"token_summary",
       {{"token_count", matrix.tokens.token_count},
        {"threshold", matrix.tokens.threshold},
        {"above_threshold", matrix.tokens.above},
        {"max", matrix.tokens.max}}},
  };
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write sidecar for " + path.string());
  out << side.dump(1) << "\n";
}

ActivationMatrix load_activation_matrix(const std::filesystem::path& path) {
  ActivationMatrix m;
  m.values = read_matrix_file(path);
  std::ifstream in(path.string() + ".json");
  if (!in) throw IoError("missing sidecar " + path.string() + ".json");
  const auto side = nlohmann::json::parse(in);
  m.layer = side.at("layer").get<int>();
  m.label = parse_corpus_label(side.at("label").get<std::string>());
  if (side.at("rows").get<std::size_t>() != m.values.rows || side.at("cols").get<std::size_t>() != m.values.cols) {
    throw IoError(path.string() + ": sidecar shape does not match payload");
  }
  const auto& ts = side.at("token_summary");
  m.tokens.token_count = ts.at("token_count").get<std::uint64_t>();
  m.tokens.threshold = ts.at("threshold").get<float>();
  m.tokens.above = ts.at("above_threshold").get<std::vector<std::uint64_t>>();
  m.tokens.max = ts.at("max").get<std::vector<float>>();
  return m;
}

}  // namespace stylescope
