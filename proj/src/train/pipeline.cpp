#include "gserec/train/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "gserec/data/io.hpp"
#include "gserec/prefs/prompt.hpp"
#include "gserec/util/archive.hpp"
#include "gserec/util/rng.hpp"

namespace gserec::train {

namespace {

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream in(v);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(parse_int(key, part));
  }
  return out;
}

std::string format_double(double d) {
  std::ostringstream out;
  out.precision(17);
  out << d;
  return out.str();
}

std::string format_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Binding {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define GSEREC_INT(KEY, FIELD)                                                          \
  Binding{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_int(KEY, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define GSEREC_U64(KEY, FIELD)                                                          \
  Binding{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_u64(KEY, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define GSEREC_DBL(KEY, FIELD)                                                             \
  Binding{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_double(KEY, v); }, \
          [](const ExperimentConfig& c) { return format_double(c.FIELD); }}
#define GSEREC_BOOL(KEY, FIELD)                                                          \
  Binding{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }, \
          [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }}
#define GSEREC_STR(KEY, FIELD)                                                 \
  Binding{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; }, \
          [](const ExperimentConfig& c) { return c.FIELD; }}
#define GSEREC_LIST(KEY, FIELD)                                                               \
  Binding{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_int_list(KEY, v); }, \
          [](const ExperimentConfig& c) { return format_list(c.FIELD); }}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table{
      GSEREC_U64("seed", seed),
      GSEREC_STR("data.path", data_path),
      GSEREC_INT("synth.users", synth.users),
      GSEREC_INT("synth.items", synth.items),
      GSEREC_INT("synth.clusters", synth.clusters),
      GSEREC_U64("synth.seed", synth.seed),
      GSEREC_INT("synth.min_rec", synth.min_rec),
      GSEREC_INT("synth.max_rec", synth.max_rec),
      GSEREC_INT("synth.max_search", synth.max_search),
      GSEREC_DBL("synth.sparse_fraction", synth.sparse_fraction),
      GSEREC_INT("synth.sparse_cap", synth.sparse_cap),
      GSEREC_DBL("synth.rec_in_cluster", synth.rec_in_cluster),
      GSEREC_DBL("synth.search_in_cluster", synth.search_in_cluster),
      GSEREC_STR("prefs.client", prefs.client),
      GSEREC_STR("prefs.embedder", prefs.embedder),
      GSEREC_INT("prefs.embed_dim", prefs.embed_dim),
      GSEREC_INT("prefs.window", prefs.window),
      GSEREC_INT("prefs.retries", prefs.retries),
      GSEREC_INT("prefs.workers", prefs.workers),
      GSEREC_STR("prefs.cache_dir", prefs.cache_dir),
      GSEREC_STR("prefs.replay_summary_id", prefs.replay_summary_id),
      GSEREC_STR("prefs.replay_embed_id", prefs.replay_embed_id),
      GSEREC_INT("rq.levels", rq.levels),
      GSEREC_INT("rq.codebook_size", rq.codebook_size),
      GSEREC_INT("rq.latent_dim", rq.latent_dim),
      GSEREC_LIST("rq.hidden", rq.hidden),
      GSEREC_DBL("rq.lambda_rq", rq.lambda_rq),
      GSEREC_DBL("rq.lambda_cl", rq.lambda_cl),
      GSEREC_DBL("rq.tau_init", rq.tau_init),
      GSEREC_INT("rq.epochs", rq.epochs),
      GSEREC_INT("rq.batch_size", rq.batch_size),
      GSEREC_DBL("rq.lr", rq.learning_rate),
      GSEREC_BOOL("rq.kmeans_init", rq.kmeans_init),
      GSEREC_BOOL("rq.restart_dead_codes", rq.restart_dead_codes),
      GSEREC_INT("model.dim", model.dim),
      GSEREC_INT("model.heads", model.heads),
      GSEREC_INT("model.ffn_hidden", model.ffn_hidden),
      GSEREC_LIST("model.mlp_hidden", model.mlp_hidden),
      GSEREC_INT("model.max_len_search", model.max_len_search),
      GSEREC_INT("model.max_len_rec", model.max_len_rec),
      GSEREC_INT("model.graph_layers", model.graph_layers),
      GSEREC_DBL("model.lambda_ucl", model.lambda_ucl),
      GSEREC_DBL("model.lambda_hiscl", model.lambda_hiscl),
      GSEREC_DBL("model.lambda_reg", model.lambda_reg),
      GSEREC_DBL("model.tau_init", model.tau_init),
      GSEREC_DBL("model.embedding_std", model.embedding_std),
      GSEREC_BOOL("model.use_graph", model.use_graph),
      GSEREC_BOOL("model.use_mca", model.use_mca),
      GSEREC_INT("train.epochs", train.epochs),
      GSEREC_INT("train.batch_size", train.batch_size),
      GSEREC_DBL("train.lr", train.learning_rate),
      GSEREC_INT("train.patience", train.patience),
      GSEREC_INT("train.negatives", train.negatives),
      GSEREC_INT("train.workers", train.workers),
      GSEREC_INT("eval.negatives", eval_negatives),
      GSEREC_U64("eval.seed", eval_seed),
      GSEREC_INT("eval.groups", eval_groups),
  };
  return table;
}

#undef GSEREC_INT
#undef GSEREC_U64
#undef GSEREC_DBL
#undef GSEREC_BOOL
#undef GSEREC_STR
#undef GSEREC_LIST

ExperimentConfig with_run_settings(ExperimentConfig c) {
  c.train.seed = c.seed;
  c.train.eval_negatives = c.eval_negatives;
  c.train.eval_seed = c.eval_seed;
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  rq.validate();
  model.validate();
  with_run_settings(*this).train.validate();
  if (eval_negatives < 1) throw std::invalid_argument("eval.negatives must be >= 1");
  if (eval_groups < 1) throw std::invalid_argument("eval.groups must be >= 1");
  if (prefs.embed_dim < 1) throw std::invalid_argument("prefs.embed_dim must be >= 1");
  if (prefs.retries < 0) throw std::invalid_argument("prefs.retries must be >= 0");
  if (prefs.workers < 1) throw std::invalid_argument("prefs.workers must be >= 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& b : bindings()) j[b.key] = b.get(*this);
  return j;
}

ExperimentConfig ExperimentConfig::from_key_values(const util::KeyValues& kv) {
  ExperimentConfig c;
  for (const auto& [key, value] : kv) {
    const auto& table = bindings();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) { return key == b.key; });
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->set(c, value);
  }
  c.validate();
  return c;
}

EvalOptions ExperimentConfig::eval_options() const {
  EvalOptions o;
  o.negatives = eval_negatives;
  o.seed = eval_seed;
  o.num_groups = eval_groups;
  o.workers = train.workers;
  return o;
}

std::string default_config_text() {
  const ExperimentConfig defaults;
  std::string out;
  for (const auto& b : bindings()) out += std::string(b.key) + " = " + b.get(defaults) + "\n";
  return out;
}

data::Dataset load_experiment_dataset(const ExperimentConfig& config) {
  if (config.data_path.empty()) return data::generate_synthetic_dataset(config.synth).dataset;
  return data::load_dataset(config.data_path);
}

std::unique_ptr<prefs::SummaryClient> make_summary_client(const PrefsSettings& s) {
  if (s.client == "mock") return std::make_unique<prefs::MockSummaryClient>();
  if (s.client == "http") return std::make_unique<prefs::HttpSummaryClient>(prefs::HttpEndpoint::from_env("GSEREC_LLM"));
  if (s.client == "replay") {
    if (s.replay_summary_id.empty()) throw std::invalid_argument("prefs.replay_summary_id is required for replay");
    return std::make_unique<prefs::ReplaySummaryClient>(s.cache_dir, s.replay_summary_id);
  }
  throw std::invalid_argument("unknown prefs.client '" + s.client + "'");
}

std::unique_ptr<prefs::EmbeddingClient> make_embedding_client(const PrefsSettings& s) {
  if (s.embedder == "hash") return std::make_unique<prefs::HashEmbeddingClient>(s.embed_dim);
  if (s.embedder == "http") return std::make_unique<prefs::HttpEmbeddingClient>(prefs::HttpEndpoint::from_env("GSEREC_EMB"));
  if (s.embedder == "replay") {
    if (s.replay_embed_id.empty()) throw std::invalid_argument("prefs.replay_embed_id is required for replay");
    return std::make_unique<prefs::ReplayEmbeddingClient>(s.cache_dir, s.replay_embed_id);
  }
  throw std::invalid_argument("unknown prefs.embedder '" + s.embedder + "'");
}

PreferenceStage run_preferences(const data::Dataset& dataset, const ExperimentConfig& config,
                                prefs::SummaryClient& client, prefs::EmbeddingClient& embedder) {
  const prefs::PipelineOptions options{config.prefs.retries, config.prefs.workers};
  const auto prompts = prefs::render_all_prompts(dataset, config.prefs.window);
  auto summaries = prefs::summarize_preferences(client, prompts, config.prefs.cache_dir, options);
  PreferenceStage stage;
  stage.failures = std::move(summaries.failures);
  stage.cache_hits = summaries.cache_hits;
  stage.client_calls = summaries.client_calls;
  auto embedded = prefs::embed_preferences(embedder, std::move(summaries.records), config.prefs.cache_dir, options);
  stage.records = std::move(embedded.records);
  stage.cache_hits += embedded.cache_hits;
  stage.client_calls += embedded.client_calls;
  if (stage.failures.empty()) stage.matrices = prefs::preference_matrices(stage.records, dataset.num_users());
  return stage;
}

QuantizerStage run_quantizer(const prefs::PreferenceMatrices& matrices, const ExperimentConfig& config) {
  QuantizerStage stage{rq::train_rqvae(matrices.search, matrices.rec, config.rq, config.seed), nullptr};
  stage.codes = std::make_shared<const rq::CodeAssignments>(
      rq::export_codes(stage.quantizer.model, matrices.search, matrices.rec));
  return stage;
}

ModelStage run_model(const data::Dataset& dataset, std::shared_ptr<const rq::CodeAssignments> codes,
                     const ExperimentConfig& config, const TrainHooks& hooks) {
  const auto run = with_run_settings(config);
  util::Rng rng({run.seed, 0x6d6f64656cu});
  model::Recommender model(run.model, dataset.num_users(), dataset.num_items(), dataset.num_words(),
                           std::move(codes), rng);
  auto result = train_recommender(model, dataset, run.train, hooks);
  const auto options = run.eval_options();
  auto valid = evaluate(model, dataset, data::Split::kValid, options);
  auto test = evaluate(model, dataset, data::Split::kTest, options);
  valid.config = test.config = run.to_json();
  return {std::move(model), std::move(result), std::move(valid), std::move(test)};
}

ExperimentConfig apply_ablation(ExperimentConfig config, const std::string& toggle) {
  if (toggle == "no_rq_cl") {
    config.rq.lambda_cl = 0.0;
  } else if (toggle == "no_uc_graph") {
    config.model.use_graph = false;
  } else if (toggle == "no_u_cl") {
    config.model.lambda_ucl = 0.0;
  } else if (toggle == "no_his_cl") {
    config.model.lambda_hiscl = 0.0;
  } else if (toggle == "no_mca") {
    config.model.use_mca = false;
  } else {
    throw std::invalid_argument("unknown ablation toggle '" + toggle + "'");
  }
  return config;
}

std::vector<NamedReport> run_ablation(const data::Dataset& dataset, const ExperimentConfig& config,
                                      const prefs::PreferenceMatrices& matrices,
                                      std::shared_ptr<const rq::CodeAssignments> base_codes,
                                      const std::vector<std::string>& toggles) {
  std::vector<ExperimentConfig> configs;
  for (const auto& t : toggles) configs.push_back(apply_ablation(config, t));
  std::vector<NamedReport> out;
  out.push_back({"baseline", run_model(dataset, base_codes, config).test});
  for (std::size_t i = 0; i < toggles.size(); ++i) {
    auto codes = base_codes;
    if (configs[i].rq.lambda_cl != config.rq.lambda_cl) codes = run_quantizer(matrices, configs[i]).codes;
    auto report = run_model(dataset, codes, configs[i]).test;
    report.config["ablation"] = toggles[i];
    out.push_back({toggles[i], std::move(report)});
  }
  return out;
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "lambda_rq_cl") return SweepParam::kLambdaRqCl;
  if (name == "lambda_ucl") return SweepParam::kLambdaUcl;
  if (name == "lambda_hiscl") return SweepParam::kLambdaHisCl;
  throw std::invalid_argument("unknown sweep parameter '" + name + "'");
}

const char* to_string(SweepParam param) {
  switch (param) {
    case SweepParam::kLambdaRqCl: return "lambda_rq_cl";
    case SweepParam::kLambdaUcl: return "lambda_ucl";
    case SweepParam::kLambdaHisCl: return "lambda_hiscl";
  }
  return "?";
}

std::vector<SweepPoint> sweep(const data::Dataset& dataset, const ExperimentConfig& config,
                              const prefs::PreferenceMatrices& matrices,
                              std::shared_ptr<const rq::CodeAssignments> base_codes, SweepParam param,
                              const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepPoint> out;
  for (const double value : grid) {
    ExperimentConfig c = config;
    auto codes = base_codes;
    switch (param) {
      case SweepParam::kLambdaRqCl:
        c.rq.lambda_cl = value;
        if (value != config.rq.lambda_cl) codes = run_quantizer(matrices, c).codes;
        break;
      case SweepParam::kLambdaUcl: c.model.lambda_ucl = value; break;
      case SweepParam::kLambdaHisCl: c.model.lambda_hiscl = value; break;
    }
    c.validate();
    auto report = run_model(dataset, codes, c).test;
    report.config["sweep"] = {{"param", to_string(param)}, {"value", value}};
    out.push_back({value, std::move(report)});
  }
  return out;
}

void write_report(const std::filesystem::path& path, const MetricsReport& report) {
  util::write_file_atomic(path, report.to_json().dump(2) + "\n");
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return MetricsReport::from_json(nlohmann::json::parse(in));
}

}  // namespace gserec::train
