#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "stylescope/config.hpp"
#include "stylescope/corpus.hpp"

namespace stylescope {

enum class Stage { chunk, style, extract, rank, contexts, lens, steer, ablate, report };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);
const std::vector<Stage>& all_stages();
// `targets` plus everything they depend on, in execution order.
std::vector<Stage> stage_closure(const std::vector<Stage>& targets);

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

struct PipelineOptions {
  std::vector<Stage> targets;  // empty: every stage
  bool force = false;          // ignore cached stage records
  std::ostream* log = nullptr;
};

struct StageStatus {
  Stage stage = Stage::chunk;
  bool cache_hit = false;
  std::string error;
  std::map<std::string, std::string> outputs;  // relative path -> sha256
};

struct PipelineResult {
  int exit_code = kExitOk;
  std::vector<StageStatus> stages;
  std::string error;
};

// Validates the config, takes the output-directory lock, then runs the
// requested stages in dependency order. A stage whose input hash matches its
// stored record (and whose outputs are intact) is skipped. A failing stage
// stops the run; upstream outputs stay in place and failure.json describes
// what happened. manifest.json is rewritten after every successful run.
PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

// Exclusive ownership of an output directory via an O_EXCL lock file; a
// lock left by a process that no longer exists is taken over.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

// chunks.json round trip.
nlohmann::json chunks_to_json(const std::vector<CorpusChunk>& chunks, std::size_t chunk_size, std::size_t overlap);
std::vector<CorpusChunk> chunks_from_json(const nlohmann::json& j);

// Every artifact a complete run leaves in the output directory.
std::vector<std::string> expected_artifacts(const ExperimentConfig& config);

}  // namespace stylescope
