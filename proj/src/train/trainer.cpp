#include "gserec/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gserec/nn/adam.hpp"
#include "gserec/train/evaluator.hpp"
#include "gserec/util/archive.hpp"
#include "gserec/util/rng.hpp"

namespace gserec::train {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("train.lr must be positive");
  if (patience < 1) throw std::invalid_argument("train.patience must be >= 1");
  if (negatives < 1) throw std::invalid_argument("train.negatives must be >= 1");
  if (eval_negatives < 1) throw std::invalid_argument("eval.negatives must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},         {"batch_size", batch_size}, {"lr", learning_rate},
          {"patience", patience},     {"seed", seed},             {"negatives", negatives},
          {"eval_seed", eval_seed},   {"eval_negatives", eval_negatives}, {"workers", workers}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("lr", c.learning_rate);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.negatives = j.value("negatives", c.negatives);
  c.eval_seed = j.value("eval_seed", c.eval_seed);
  c.eval_negatives = j.value("eval_negatives", c.eval_negatives);
  c.workers = j.value("workers", c.workers);
  return c;
}

bool EarlyStopper::update(double value) {
  ++epoch_;
  if (best_epoch_ < 0 || value > best_) {
    best_ = value;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"loss", loss},   {"rec", rec},   {"ucl", ucl},
          {"hiscl", hiscl}, {"reg", reg},     {"valid_ndcg5", valid_metric}, {"best", best}};
}

std::vector<model::Example> training_examples(const data::Dataset& dataset, int negatives, std::uint64_t seed,
                                              int epoch) {
  util::Rng rng({seed, static_cast<std::uint64_t>(epoch), 0x7472u});
  const int n = dataset.num_items();
  std::vector<model::Example> out;
  for (const auto& u : dataset.users) {
    const auto touched = data::interacted_items(u);
    if (static_cast<int>(touched.size()) >= n) continue;
    for (int k = 1; k < u.num_rec(); ++k) {
      if (u.rec_split[static_cast<std::size_t>(k)] != data::Split::kTrain) continue;
      model::Example ex{u.id, k, {u.rec[static_cast<std::size_t>(k)].item}, {1.0}};
      for (int j = 0; j < negatives; ++j) {
        int item;
        do {
          item = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        } while (std::binary_search(touched.begin(), touched.end(), item));
        ex.candidates.push_back(item);
        ex.labels.push_back(0.0);
      }
      out.push_back(std::move(ex));
    }
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

namespace {

nlohmann::json trace_json(const std::vector<EpochRecord>& trace) {
  auto j = nlohmann::json::array();
  for (const auto& r : trace) j.push_back(r.to_json());
  return j;
}

double scalar(const nn::Var& v) { return v.valid() ? v.value()(0, 0) : 0.0; }

}  // namespace

TrainResult train_recommender(model::Recommender& model, const data::Dataset& dataset, const TrainConfig& config,
                              const TrainHooks& hooks) {
  config.validate();
  const auto& mc = model.config();
  model::FeatureBuilder builder(dataset, mc.max_len_search, mc.max_len_rec);
  nn::Adam adam(model.params().all(), {.learning_rate = config.learning_rate});
  EarlyStopper stopper(config.patience);
  TrainResult result;
  std::vector<Matrix> best;

  EvalOptions eval;
  eval.negatives = config.eval_negatives;
  eval.seed = config.eval_seed;
  eval.workers = config.workers;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto examples = training_examples(dataset, config.negatives, config.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < examples.size(); lo += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t hi = std::min(examples.size(), lo + static_cast<std::size_t>(config.batch_size));
      const auto features = builder.build(std::span(examples).subspan(lo, hi - lo));
      nn::Tape tape;
      const auto out = model.forward(tape, features);
      const double loss = scalar(out.objective);
      if (!std::isfinite(loss)) {
        result.trace.push_back(rec);
        throw TrainError("recommender training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches),
                         trace_json(result.trace));
      }
      adam.zero_grad();
      tape.backward(out.objective);
      model.add_regularization_grad();
      adam.step();
      model.clamp_temperatures();
      rec.loss += loss;
      rec.rec += scalar(out.rec_loss);
      rec.ucl += scalar(out.ucl);
      rec.hiscl += scalar(out.hiscl);
      ++batches;
    }
    if (batches > 0) {
      const double inv = 1.0 / static_cast<double>(batches);
      rec.loss *= inv;
      rec.rec *= inv;
      rec.ucl *= inv;
      rec.hiscl *= inv;
    }
    rec.reg = model.regularization();
    rec.valid_metric = hooks.valid_metric ? hooks.valid_metric(epoch, model)
                                          : evaluate(model, dataset, data::Split::kValid, eval).overall.ndcg5;
    rec.best = stopper.update(rec.valid_metric);
    if (rec.best) {
      best.clear();
      for (const auto* p : model.params().all()) best.push_back(p->value);
    }
    result.trace.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.should_stop()) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  auto params = model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  model.round_to_f32();
  result.best_epoch = stopper.best_epoch();
  result.best_valid = stopper.best();
  return result;
}

void write_trace(const std::filesystem::path& path, const std::vector<EpochRecord>& trace) {
  std::string text;
  for (const auto& r : trace) text += r.to_json().dump() + "\n";
  util::write_file_atomic(path, text);
}

}  // namespace gserec::train
