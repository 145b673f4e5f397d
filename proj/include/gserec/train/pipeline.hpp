#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "gserec/data/dataset.hpp"
#include "gserec/data/synthetic.hpp"
#include "gserec/model/recommender.hpp"
#include "gserec/prefs/clients.hpp"
#include "gserec/prefs/pipeline.hpp"
#include "gserec/rq/codes.hpp"
#include "gserec/rq/rqvae.hpp"
#include "gserec/train/evaluator.hpp"
#include "gserec/train/metrics.hpp"
#include "gserec/train/trainer.hpp"
#include "gserec/util/config.hpp"

namespace gserec::train {

struct PrefsSettings {
  std::string client = "mock";    ///< mock | http | replay
  std::string embedder = "hash";  ///< hash | http | replay
  int embed_dim = 64;             ///< hash embedder width
  int window = 50;
  int retries = 3;
  int workers = 1;
  std::string cache_dir = "cache";
  std::string replay_summary_id;  ///< recorded client id for replay
  std::string replay_embed_id;
};

/// Every setting of a two-stage run. Keys mirror the flat config file,
/// e.g. `rq.levels`, `model.dim`, `train.epochs`.
struct ExperimentConfig {
  std::uint64_t seed = 2024;
  std::string data_path;  ///< empty: generate the synthetic corpus
  data::SynthConfig synth;
  PrefsSettings prefs;
  rq::QuantizerConfig rq;
  model::RecommenderConfig model;
  TrainConfig train;
  int eval_negatives = 99;
  std::uint64_t eval_seed = 2024;
  int eval_groups = 5;

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are an error.
  static ExperimentConfig from_key_values(const util::KeyValues& kv);
  EvalOptions eval_options() const;
};

/// Documented key set with default values, in config-file syntax.
std::string default_config_text();

data::Dataset load_experiment_dataset(const ExperimentConfig& config);

std::unique_ptr<prefs::SummaryClient> make_summary_client(const PrefsSettings& settings);
std::unique_ptr<prefs::EmbeddingClient> make_embedding_client(const PrefsSettings& settings);

struct PreferenceStage {
  std::vector<prefs::PreferenceRecord> records;
  std::vector<prefs::FailedPrompt> failures;
  prefs::PreferenceMatrices matrices;  ///< empty when any prompt failed
  int cache_hits = 0;
  int client_calls = 0;
};

/// Prompts, summaries and embeddings for every user. Failed prompts are
/// reported, not thrown; the matrices are only built when none failed.
PreferenceStage run_preferences(const data::Dataset& dataset, const ExperimentConfig& config,
                                prefs::SummaryClient& client, prefs::EmbeddingClient& embedder);

struct QuantizerStage {
  rq::TrainedQuantizer quantizer;
  std::shared_ptr<const rq::CodeAssignments> codes;
};

QuantizerStage run_quantizer(const prefs::PreferenceMatrices& matrices, const ExperimentConfig& config);

struct ModelStage {
  model::Recommender model;
  TrainResult result;
  MetricsReport valid;
  MetricsReport test;
};

/// Builds the recommender over `codes`, trains it and evaluates both splits.
ModelStage run_model(const data::Dataset& dataset, std::shared_ptr<const rq::CodeAssignments> codes,
                     const ExperimentConfig& config, const TrainHooks& hooks = {});

inline const std::vector<std::string> kAblationToggles{"no_rq_cl", "no_uc_graph", "no_u_cl", "no_his_cl",
                                                       "no_mca"};

/// Config with one mechanism removed; throws on an unknown toggle.
ExperimentConfig apply_ablation(ExperimentConfig config, const std::string& toggle);

struct NamedReport {
  std::string name;
  MetricsReport report;
};

/// Baseline test report followed by one per toggle. `no_rq_cl` retrains the
/// quantizer; the other toggles reuse `base_codes`.
std::vector<NamedReport> run_ablation(const data::Dataset& dataset, const ExperimentConfig& config,
                                      const prefs::PreferenceMatrices& matrices,
                                      std::shared_ptr<const rq::CodeAssignments> base_codes,
                                      const std::vector<std::string>& toggles);

enum class SweepParam { kLambdaRqCl, kLambdaUcl, kLambdaHisCl };
SweepParam parse_sweep_param(const std::string& name);
const char* to_string(SweepParam param);

struct SweepPoint {
  double value = 0;
  MetricsReport report;  ///< test split, config echoed
};

/// One full run per grid value with every other setting unchanged.
std::vector<SweepPoint> sweep(const data::Dataset& dataset, const ExperimentConfig& config,
                              const prefs::PreferenceMatrices& matrices,
                              std::shared_ptr<const rq::CodeAssignments> base_codes, SweepParam param,
                              const std::vector<double>& grid);

void write_report(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace gserec::train
