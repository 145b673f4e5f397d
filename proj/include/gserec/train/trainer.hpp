#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "gserec/data/dataset.hpp"
#include "gserec/model/recommender.hpp"

namespace gserec::train {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  int patience = 10;
  std::uint64_t seed = 2024;
  int negatives = 1;           ///< sampled negatives per training positive
  std::uint64_t eval_seed = 2024;
  int eval_negatives = 99;
  int workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

class TrainError : public std::runtime_error {
 public:
  TrainError(const std::string& what, nlohmann::json trace) : std::runtime_error(what), trace(std::move(trace)) {}
  nlohmann::json trace;
};

/// Counts epochs since the best value; higher is better.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  /// Returns true when this value is a new best.
  bool update(double value);
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int since_best_ = 0;
  int epoch_ = 0;
  int best_epoch_ = -1;
  double best_ = -1.0;
};

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double loss = 0, rec = 0, ucl = 0, hiscl = 0, reg = 0;
  double valid_metric = 0;
  bool best = false;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  int best_epoch = 0;
  double best_valid = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  /// Replaces the valid NDCG@5 computation; receives the 1-based epoch.
  std::function<double(int, const model::Recommender&)> valid_metric;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Training examples for one epoch: every train-labelled rec event after
/// the first, paired with `negatives` uniformly drawn untouched items.
std::vector<model::Example> training_examples(const data::Dataset& dataset, int negatives, std::uint64_t seed,
                                              int epoch);

/// Adam on the full objective with per-epoch reshuffling and early stopping
/// on validation NDCG@5. On return `model` holds the best epoch's
/// parameters, rounded to f32.
TrainResult train_recommender(model::Recommender& model, const data::Dataset& dataset, const TrainConfig& config,
                              const TrainHooks& hooks = {});

void write_trace(const std::filesystem::path& path, const std::vector<EpochRecord>& trace);

}  // namespace gserec::train
