#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "textlrp/attribution.hpp"
#include "textlrp/blackbox.hpp"
#include "textlrp/cnn.hpp"
#include "textlrp/synth.hpp"

namespace textlrp {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything one pipeline run needs. Relative paths resolve against the
// directory of the config file they came from.
struct PipelineConfig {
  std::string train_corpus;
  std::string eval_corpus;
  std::string embeddings;
  std::string workdir = "work";
  bool star_labels = false;
  // Optional stratified down-sampling of each split.
  std::optional<std::size_t> train_sample;
  std::optional<std::size_t> eval_sample;

  LinearTrainConfig blackbox;
  // dim is taken from the embedding file.
  CnnConfig cnn;
  LrpConfig lrp;
  std::size_t ig_steps = 64;
  int target_class = 1;
  std::size_t min_count = 20;
  std::size_t ngram_min_count = 5;
  std::vector<std::size_t> deletion_steps{0, 50, 100, 150, 200, 250, 300};
  std::size_t case_limit = 5;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static PipelineConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;

  // Every problem found, empty when valid. Checks referenced paths too.
  std::vector<std::string> problems() const;
  // Throws ValidationError listing all problems.
  void validate() const;

  // Stage seeds derived from `seed`.
  LinearTrainConfig blackbox_config() const;
  CnnConfig cnn_config(std::size_t dim) const;
};

enum class Split { train, eval };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

// Loaded and sampled corpora plus embeddings.
struct PipelineData {
  Corpus train;
  Corpus eval;
  EmbeddingTable table;
  const Corpus& split(Split s) const { return s == Split::train ? train : eval; }
};

PipelineData load_pipeline_data(const PipelineConfig& config);

// Workdir artifact paths.
std::string workdir_path(const PipelineConfig& config, const std::string& name);
std::string explain_file_name(Method method, Split split);

void cmd_train_blackbox(const PipelineConfig& config, std::ostream& log);
void cmd_train_surrogate(const PipelineConfig& config, std::ostream& log);
// Returns the number of explained documents.
std::size_t cmd_explain(const PipelineConfig& config, Method method, Split split,
                        const std::optional<std::string>& doc_id, const std::optional<std::string>& html_path,
                        std::ostream& log);
void cmd_report(const PipelineConfig& config, std::ostream& log);
void cmd_oov_report(const PipelineConfig& config, std::ostream& log);
// Writes the corpus, embeddings and a ready-to-use pipeline.json into out_dir.
void cmd_synth(const SyntheticSpec& spec, const std::string& out_dir, std::ostream& log);

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json synthetic_spec_to_json(const SyntheticSpec& spec);

}  // namespace textlrp
