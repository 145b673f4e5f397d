#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gserec/data/grouping.hpp"
#include "gserec/data/io.hpp"
#include "gserec/graph/user_code_graph.hpp"
#include "gserec/prefs/pipeline.hpp"
#include "gserec/rq/codes.hpp"
#include "gserec/train/pipeline.hpp"
#include "gserec/train/plots.hpp"
#include "gserec/util/archive.hpp"

namespace fs = std::filesystem;
using namespace gserec;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string dir = "run";
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_path, "key=value config file");
  cmd->add_option("-s,--set", common.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("-d,--dir", common.dir, "run directory for artifacts")->capture_default_str();
}

train::ExperimentConfig load_config(const Common& common) {
  util::KeyValues kv;
  if (!common.config_path.empty()) kv = util::load_key_values(common.config_path);
  for (const auto& o : common.overrides) util::apply_override(kv, o);
  return train::ExperimentConfig::from_key_values(kv);
}

std::vector<std::string> user_keys(const data::Dataset& ds) {
  std::vector<std::string> keys;
  for (const auto& u : ds.users) keys.push_back(u.key);
  return keys;
}

void write_json(const fs::path& path, const nlohmann::json& j) { util::write_file_atomic(path, j.dump(2) + "\n"); }

void print_metrics(const train::MetricsReport& r) {
  std::cout << r.split << " rows=" << r.rows;
  for (const auto& name : train::kMetricNames) std::cout << " " << name << "=" << r.overall.get(name);
  std::cout << "\n";
}

prefs::PreferenceMatrices load_matrices(const fs::path& dir, const data::Dataset& ds) {
  const auto keys = user_keys(ds);
  const auto records = prefs::read_preferences(dir / "prefs.jsonl", keys);
  return prefs::preference_matrices(records, ds.num_users());
}

std::shared_ptr<const rq::CodeAssignments> load_codes(const fs::path& dir, const data::Dataset& ds,
                                                      const train::ExperimentConfig& cfg) {
  const auto keys = user_keys(ds);
  return std::make_shared<const rq::CodeAssignments>(rq::read_codes(dir / "codes.jsonl", keys, cfg.rq.codebook_size));
}

int cmd_prefs(const Common& common) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  fs::create_directories(common.dir);
  auto client = train::make_summary_client(cfg.prefs);
  auto embedder = train::make_embedding_client(cfg.prefs);
  const auto stage = train::run_preferences(ds, cfg, *client, *embedder);
  const auto keys = user_keys(ds);
  prefs::write_preferences(fs::path(common.dir) / "prefs.jsonl", stage.records, keys);
  prefs::write_failure_manifest(fs::path(common.dir) / "prefs_failures.jsonl", stage.failures, keys);
  std::cout << "prompts=" << 2 * ds.num_users() << " records=" << stage.records.size()
            << " failures=" << stage.failures.size() << " cache_hits=" << stage.cache_hits
            << " client_calls=" << stage.client_calls << "\n";
  return stage.failures.empty() ? 0 : 2;
}

int cmd_quantize(const Common& common) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  const fs::path dir = common.dir;
  const auto matrices = load_matrices(dir, ds);
  const auto stage = train::run_quantizer(matrices, cfg);
  rq::save_quantizer(dir / "quantizer.ckpt", stage.quantizer);
  rq::write_codes(dir / "codes.jsonl", *stage.codes, user_keys(ds));
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : stage.quantizer.trace) {
    trace.push_back({{"total", e.total}, {"recon", e.recon}, {"rq", e.rq}, {"cl", e.cl}});
  }
  write_json(dir / "quantizer_trace.json", trace);
  for (int l = 0; l < cfg.rq.levels; ++l) {
    std::cout << "level " << l << " perplexity search=" << rq::code_perplexity(stage.codes->search, l)
              << " rec=" << rq::code_perplexity(stage.codes->rec, l) << "\n";
  }
  return 0;
}

int cmd_graph(const Common& common) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  const fs::path dir = common.dir;
  const auto codes = load_codes(dir, ds, cfg);
  nlohmann::json out;
  for (const auto channel : {rq::Channel::kSearch, rq::Channel::kRec}) {
    const std::string name = channel == rq::Channel::kSearch ? "search" : "rec";
    const auto g = graph::build_graph(*codes, channel);
    graph::write_edge_list(dir / ("graph_" + name + ".edges"), g);
    const auto s = graph::graph_stats(g);
    out[name] = {{"users", s.users},
                 {"codes", s.codes},
                 {"edges", s.edges},
                 {"components", s.components},
                 {"max_code_degree", s.max_code_degree},
                 {"mean_code_degree", s.mean_code_degree},
                 {"codes_per_level", s.codes_per_level}};
  }
  write_json(dir / "graph_stats.json", out);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_train(const Common& common) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  const fs::path dir = common.dir;
  const auto codes = load_codes(dir, ds, cfg);
  train::TrainHooks hooks;
  hooks.on_epoch = [](const train::EpochRecord& e) {
    std::cout << "epoch " << e.epoch << " loss=" << e.loss << " rec=" << e.rec << " valid_ndcg5=" << e.valid_metric
              << (e.best ? " *" : "") << "\n";
  };
  auto stage = train::run_model(ds, codes, cfg, hooks);
  model::save_recommender(dir / "model.ckpt", stage.model, {{"experiment", cfg.to_json()}});
  train::write_trace(dir / "trace.jsonl", stage.result.trace);
  train::write_report(dir / "report_valid.json", stage.valid);
  train::write_report(dir / "report_test.json", stage.test);
  print_metrics(stage.valid);
  print_metrics(stage.test);
  return 0;
}

int cmd_eval(const Common& common, const std::string& split_name, const std::string& checkpoint) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  const fs::path dir = common.dir;
  const auto split = split_name == "valid" ? data::Split::kValid : data::Split::kTest;
  const auto [model, extra] = model::load_recommender(checkpoint.empty() ? dir / "model.ckpt" : fs::path(checkpoint));
  auto report = train::evaluate(model, ds, split, cfg.eval_options());
  report.config = extra.value("experiment", cfg.to_json());
  train::write_report(dir / ("eval_" + split_name + ".json"), report);
  print_metrics(report);
  return 0;
}

int cmd_report(const Common& common, const std::string& base, const std::vector<std::string>& others) {
  const auto cfg = load_config(common);
  const fs::path dir = common.dir;
  const auto base_report = train::read_report(base);
  std::vector<train::NamedReport> named;
  for (const auto& o : others) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--other expects name=path, got " + o);
    named.push_back({o.substr(0, eq), train::read_report(o.substr(eq + 1))});
  }
  const auto ds = train::load_experiment_dataset(cfg);
  const auto grouping = data::group_users_by_search_count(ds, cfg.eval_groups);
  train::write_fig1(dir, ds, grouping, &base_report);
  if (!named.empty()) train::write_fig2(dir, base_report, named);
  for (const auto& n : named) {
    for (const auto& imp : train::group_report(base_report, n.report)) {
      std::cout << n.name << " " << imp.label << " NDCG@5 ";
      if (imp.empty) {
        std::cout << "empty\n";
      } else if (imp.relative[3]) {
        std::cout << *imp.relative[3] * 100 << "%\n";
      } else {
        std::cout << "n/a\n";
      }
    }
  }
  return 0;
}

int cmd_ablate(const Common& common, std::vector<std::string> toggles) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  const fs::path dir = common.dir;
  if (toggles.size() == 1 && toggles[0] == "all") toggles = train::kAblationToggles;
  const auto runs = train::run_ablation(ds, cfg, load_matrices(dir, ds), load_codes(dir, ds, cfg), toggles);
  for (const auto& r : runs) {
    train::write_report(dir / ("ablation_" + r.name + ".json"), r.report);
    std::cout << r.name << ": ";
    print_metrics(r.report);
  }
  const std::vector<train::NamedReport> variants(runs.begin() + 1, runs.end());
  if (!variants.empty()) train::write_fig2(dir, runs.front().report, variants);
  return 0;
}

int cmd_sweep(const Common& common, const std::string& param_name, const std::vector<double>& grid) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  const fs::path dir = common.dir;
  const auto param = train::parse_sweep_param(param_name);
  const auto points = train::sweep(ds, cfg, load_matrices(dir, ds), load_codes(dir, ds, cfg), param, grid);
  for (std::size_t i = 0; i < points.size(); ++i) {
    train::write_report(dir / ("sweep_" + param_name + "_" + std::to_string(i) + ".json"), points[i].report);
    std::cout << param_name << "=" << points[i].value << " NDCG@5=" << points[i].report.overall.ndcg5
              << " HR@5=" << points[i].report.overall.hr5 << "\n";
  }
  train::write_fig7(dir, param, points);
  return 0;
}

int cmd_data(const Common& common, const std::string& action, const std::string& out) {
  const auto cfg = load_config(common);
  const auto ds = train::load_experiment_dataset(cfg);
  ds.validate();
  if (action == "synth") {
    if (out.empty()) throw std::invalid_argument("data synth needs --out");
    data::save_dataset(ds, out);
  }
  const auto s = data::compute_stats(ds);
  std::cout << "users=" << s.users << " items=" << s.items << " queries=" << s.queries << " words=" << s.words
            << " search=" << s.search_interactions << " rec=" << s.rec_interactions << " valid_rows=" << s.valid_rows
            << " test_rows=" << s.test_rows << "\n";
  const auto grouping = data::group_users_by_search_count(ds, cfg.eval_groups);
  for (const auto& w : grouping.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Search-enhanced sequential recommendation over user-code graphs"};
  app.require_subcommand(1);
  Common common;

  auto* config_cmd = app.add_subcommand("config", "print the documented config keys with defaults");

  std::string data_action = "validate", data_out;
  auto* data_cmd = app.add_subcommand("data", "validate, summarize or export the corpus");
  data_cmd->add_option("action", data_action, "validate | synth")->check(CLI::IsMember({"validate", "synth"}));
  data_cmd->add_option("-o,--out", data_out, "records path for `synth`");
  add_common(data_cmd, common);

  auto* prefs_cmd = app.add_subcommand("prefs", "summarize and embed user preferences");
  add_common(prefs_cmd, common);
  auto* quantize_cmd = app.add_subcommand("quantize", "train the quantizer and export codes");
  add_common(quantize_cmd, common);
  auto* graph_cmd = app.add_subcommand("graph", "build user-code graphs and print statistics");
  add_common(graph_cmd, common);
  auto* train_cmd = app.add_subcommand("train", "train and evaluate the recommender");
  add_common(train_cmd, common);

  std::string split = "test", checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"valid", "test"}))->capture_default_str();
  eval_cmd->add_option("--checkpoint", checkpoint, "defaults to <dir>/model.ckpt");
  add_common(eval_cmd, common);

  std::string base;
  std::vector<std::string> others;
  auto* report_cmd = app.add_subcommand("report", "per-group tables and plot data from reports");
  report_cmd->add_option("--base", base, "reference report")->required();
  report_cmd->add_option("--other", others, "name=report.json, repeatable");
  add_common(report_cmd, common);

  std::vector<std::string> toggles{"all"};
  auto* ablate_cmd = app.add_subcommand("ablate", "run ablation toggles against the baseline");
  ablate_cmd->add_option("--toggles", toggles, "comma-separated toggles or `all`")->delimiter(',');
  add_common(ablate_cmd, common);

  std::string param;
  std::vector<double> grid;
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep one loss weight");
  sweep_cmd->add_option("--param", param)->required()->check(
      CLI::IsMember({"lambda_rq_cl", "lambda_ucl", "lambda_hiscl"}));
  sweep_cmd->add_option("--grid", grid, "comma-separated values")->required()->delimiter(',');
  add_common(sweep_cmd, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (config_cmd->parsed()) {
      std::cout << train::default_config_text();
      return 0;
    }
    if (data_cmd->parsed()) return cmd_data(common, data_action, data_out);
    if (prefs_cmd->parsed()) return cmd_prefs(common);
    if (quantize_cmd->parsed()) return cmd_quantize(common);
    if (graph_cmd->parsed()) return cmd_graph(common);
    if (train_cmd->parsed()) return cmd_train(common);
    if (eval_cmd->parsed()) return cmd_eval(common, split, checkpoint);
    if (report_cmd->parsed()) return cmd_report(common, base, others);
    if (ablate_cmd->parsed()) return cmd_ablate(common, toggles);
    if (sweep_cmd->parsed()) return cmd_sweep(common, param, grid);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
