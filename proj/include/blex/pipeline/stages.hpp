#pragma once

#include "blex/metrics/metrics.hpp"
#include "blex/pipeline/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace blex::pipeline {

/// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_sha1(const std::filesystem::path& path);
std::string sha1_hex(std::string_view data);

/// Fixed file layout below the output and data directories.
struct Layout {
  explicit Layout(const RunConfig& config);

  std::filesystem::path out, data;

  std::filesystem::path corpus(const std::string& split, const std::string& ext) const {
    return data / (split + "." + ext);
  }
  std::filesystem::path expert() const { return out / "model" / "expert.blex"; }
  std::filesystem::path bpe_source() const { return out / "model" / "bpe.src"; }
  std::filesystem::path bpe_target() const { return out / "model" / "bpe.tgt"; }
  std::filesystem::path features(const std::string& split) const { return out / "features" / (split + ".qeft"); }
  std::filesystem::path qe_member(int i) const { return out / "model" / ("qe." + std::to_string(i) + ".qebl"); }
  std::filesystem::path predictions(const std::string& split) const { return out / "predictions" / split; }
  std::filesystem::path report(const std::string& split) const { return out / "reports" / split; }
  std::filesystem::path stamp(const std::string& stage) const { return out / "stamps" / (stage + ".stamp"); }
  std::filesystem::path manifest() const { return out / "manifest.txt"; }

  // Path as recorded in manifests: relative to the output directory when below it.
  std::string display(const std::filesystem::path& p) const;
};

inline const std::vector<std::string> kSplits{"train", "dev", "test"};

struct StageRecord {
  std::string name;
  bool skipped = false;
  double seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> inputs;   // display path, hash
  std::vector<std::pair<std::string, std::string>> outputs;  // display path, hash
};

struct StageOptions {
  // Rerun even when the stamp says the outputs are current.
  bool force = false;
};

StageRecord cmd_synth(const RunConfig& config, const StageOptions& options = {});
StageRecord cmd_label(const RunConfig& config, const StageOptions& options = {});
StageRecord cmd_pretrain(const RunConfig& config, const StageOptions& options = {});
StageRecord cmd_extract(const RunConfig& config, const StageOptions& options = {});
StageRecord cmd_train_qe(const RunConfig& config, const StageOptions& options = {});

struct PredictRequest {
  std::filesystem::path source;
  std::filesystem::path mt;
  // Writes <prefix>.hter, <prefix>.tags and <prefix>.gap_tags for the enabled tasks.
  std::filesystem::path output_prefix;
};

/// Reads only the checkpoints and the source/MT files; never a reference.
StageRecord cmd_predict(const RunConfig& config, const PredictRequest& request);

struct EvalRequest {
  std::filesystem::path predicted_prefix;
  std::filesystem::path gold_prefix;
  // Writes <prefix>.txt and <prefix>.kv when non-empty.
  std::filesystem::path report_prefix;
};

MetricReport cmd_eval(const RunConfig& config, const EvalRequest& request, StageRecord* record = nullptr);

struct Manifest {
  io::KeyValues config;
  std::vector<StageRecord> stages;
  MetricReport report;

  std::string to_text() const;
};

/// synth (when the corpus is missing) -> label -> pretrain -> extract ->
/// train-qe -> predict -> eval on the test split. Stages whose outputs are
/// current are skipped. Writes the manifest and returns it.
Manifest cmd_pipeline(const RunConfig& config, const StageOptions& options = {});

}  // namespace blex::pipeline
