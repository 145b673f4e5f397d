#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"

#include "gserec/data/grouping.hpp"
#include "gserec/data/synthetic.hpp"
#include "gserec/train/evaluator.hpp"
#include "gserec/train/metrics.hpp"
#include "gserec/train/pipeline.hpp"
#include "gserec/train/plots.hpp"
#include "gserec/train/trainer.hpp"
#include "gserec/util/hash.hpp"
#include "gserec/util/rng.hpp"

using namespace gserec;
using namespace gserec::train;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("gserec_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

data::Dataset corpus(int users, int items, std::uint64_t seed) {
  data::SynthConfig cfg;
  cfg.users = users;
  cfg.items = items;
  cfg.clusters = 2;
  cfg.seed = seed;
  cfg.min_rec = 4;
  cfg.max_rec = 8;
  cfg.max_search = 6;
  return data::generate_synthetic_dataset(cfg).dataset;
}

ExperimentConfig tiny_experiment(const fs::path& cache) {
  ExperimentConfig c;
  c.seed = 11;
  c.synth.users = 40;
  c.synth.items = 60;
  c.synth.clusters = 2;
  c.synth.min_rec = 4;
  c.synth.max_rec = 8;
  c.synth.max_search = 6;
  c.prefs.cache_dir = cache.string();
  c.prefs.embed_dim = 16;
  c.rq.levels = 2;
  c.rq.codebook_size = 4;
  c.rq.latent_dim = 8;
  c.rq.hidden = {16};
  c.rq.epochs = 5;
  c.rq.batch_size = 64;
  c.model.dim = 8;
  c.model.heads = 2;
  c.model.ffn_hidden = 16;
  c.model.mlp_hidden = {8};
  c.model.max_len_search = 6;
  c.model.max_len_rec = 6;
  c.train.epochs = 2;
  c.train.batch_size = 64;
  c.train.patience = 5;
  c.eval_negatives = 20;
  c.eval_groups = 3;
  return c;
}

struct Stage1 {
  data::Dataset dataset;
  prefs::PreferenceMatrices matrices;
  std::shared_ptr<const rq::CodeAssignments> codes;
};

Stage1 stage1(const ExperimentConfig& c) {
  Stage1 s{load_experiment_dataset(c), {}, nullptr};
  auto client = make_summary_client(c.prefs);
  auto embedder = make_embedding_client(c.prefs);
  auto prefs = run_preferences(s.dataset, c, *client, *embedder);
  REQUIRE(prefs.failures.empty());
  s.matrices = prefs.matrices;
  s.codes = run_quantizer(s.matrices, c).codes;
  return s;
}

// Deterministic pseudo-random score with frequent ties.
double table_score(std::uint64_t table, int user, int item) {
  const auto h = util::fnv1a64(std::to_string(table) + ":" + std::to_string(user) + ":" + std::to_string(item));
  return static_cast<double>(h % 12);
}

void check_bounds(const MetricSet& m) {
  for (const auto& name : kMetricNames) {
    CHECK(m.get(name) >= 0.0);
    CHECK(m.get(name) <= 1.0);
  }
  CHECK(m.hr1 <= m.hr5);
  CHECK(m.hr5 <= m.hr10);
  CHECK(m.ndcg5 <= m.hr5);
  CHECK(m.ndcg10 <= m.hr10);
}

}  // namespace

TEST_CASE("metrics for hand-ranked rows") {
  const auto top = MetricSet::from_rank(1);
  CHECK(top.hr1 == 1.0);
  CHECK(top.ndcg5 == 1.0);
  const auto third = MetricSet::from_rank(3);
  CHECK(third.hr1 == 0.0);
  CHECK(third.hr5 == 1.0);
  CHECK(third.ndcg5 == doctest::Approx(0.5).epsilon(1e-15));
  const auto eleventh = MetricSet::from_rank(11);
  CHECK(eleventh.hr10 == 0.0);
  CHECK(eleventh.ndcg10 == 0.0);
}

TEST_CASE("score ties are broken by ascending item id") {
  const std::vector<double> scores{0.5, 0.5, 0.9, 0.5};
  const std::vector<int> items{7, 3, 1, 9};
  CHECK(rank_of(scores, items, 2) == 1);
  CHECK(rank_of(scores, items, 1) == 2);
  CHECK(rank_of(scores, items, 0) == 3);
  CHECK(rank_of(scores, items, 3) == 4);
}

TEST_CASE("evaluation matches a naive sort-and-scan on 100 score tables") {
  const auto ds = corpus(60, 200, 3);
  EvalOptions opts;
  opts.negatives = 30;
  opts.seed = 5;
  opts.batch_size = 7;
  opts.workers = 3;
  opts.num_groups = 3;
  const auto grouping = data::group_users_by_search_count(ds, opts.num_groups);
  const auto rows = build_eval_rows(ds, data::Split::kTest, opts);
  REQUIRE(rows.size() > 20);

  for (std::uint64_t table = 0; table < 100; ++table) {
    const Scorer scorer = [table](std::span<const EvalRow> part) {
      std::vector<std::vector<double>> out;
      for (const auto& row : part) {
        std::vector<double> s;
        for (int item : row.candidates) s.push_back(table_score(table, row.user, item));
        out.push_back(s);
      }
      return out;
    };
    const auto report = evaluate_scorer(ds, data::Split::kTest, scorer, opts);

    // Oracle: sort the whole list, scan for the truth.
    std::vector<double> sums(5, 0.0);
    std::map<int, std::pair<int, std::vector<double>>> per_group;
    for (const auto& row : rows) {
      std::vector<std::pair<double, int>> order;
      for (int item : row.candidates) order.emplace_back(table_score(table, row.user, item), item);
      std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::size_t pos = 0;
      while (order[pos].second != row.candidates[0]) ++pos;
      const double dcg = 1.0 / std::log2(static_cast<double>(pos) + 2.0);
      const std::vector<double> m{pos < 1 ? 1.0 : 0.0, pos < 5 ? 1.0 : 0.0, pos < 10 ? 1.0 : 0.0,
                                  pos < 5 ? dcg : 0.0, pos < 10 ? dcg : 0.0};
      auto& g = per_group[grouping.assignment[static_cast<std::size_t>(row.user)]];
      if (g.second.empty()) g.second.assign(5, 0.0);
      ++g.first;
      for (int k = 0; k < 5; ++k) {
        sums[static_cast<std::size_t>(k)] += m[static_cast<std::size_t>(k)];
        g.second[static_cast<std::size_t>(k)] += m[static_cast<std::size_t>(k)];
      }
    }
    const double n = static_cast<double>(rows.size());
    for (int k = 0; k < 5; ++k) {
      REQUIRE(report.overall.get(kMetricNames[static_cast<std::size_t>(k)]) == sums[static_cast<std::size_t>(k)] / n);
    }
    for (const auto& [g, entry] : per_group) {
      const auto& gm = report.groups[static_cast<std::size_t>(g)];
      REQUIRE(gm.rows == entry.first);
      for (int k = 0; k < 5; ++k) {
        REQUIRE(gm.metrics.get(kMetricNames[static_cast<std::size_t>(k)]) ==
                entry.second[static_cast<std::size_t>(k)] / entry.first);
      }
    }
    check_bounds(report.overall);
  }
}

TEST_CASE("random scorer over 1000 rows gives HR@10 near 0.10") {
  const auto ds = corpus(1000, 500, 17);
  EvalOptions opts;
  opts.seed = 99;
  const Scorer scorer = [](std::span<const EvalRow> part) {
    std::vector<std::vector<double>> out;
    for (const auto& row : part) {
      util::Rng rng({31u, static_cast<std::uint64_t>(row.user)});
      std::vector<double> s;
      for (std::size_t i = 0; i < row.candidates.size(); ++i) s.push_back(rng.uniform());
      out.push_back(s);
    }
    return out;
  };
  const auto report = evaluate_scorer(ds, data::Split::kTest, scorer, opts);
  CHECK(report.rows == 1000);
  CHECK(report.candidate_list_size == 100);
  CHECK(std::abs(report.overall.hr10 - 0.10) <= 0.03);
}

TEST_CASE("negatives avoid the whole interaction history") {
  const auto ds = corpus(50, 120, 4);
  for (const auto& u : ds.users) {
    const auto touched = data::interacted_items(u);
    const auto negs = sample_negatives(ds, u.id, data::Split::kTest, 99, 8);
    const int eligible = ds.num_items() - static_cast<int>(touched.size());
    CHECK(static_cast<int>(negs.size()) == std::min(99, eligible));
    CHECK(std::set<int>(negs.begin(), negs.end()).size() == negs.size());
    for (int item : negs) CHECK_FALSE(std::binary_search(touched.begin(), touched.end(), item));
    CHECK(negs == sample_negatives(ds, u.id, data::Split::kTest, 99, 8));
  }
}

TEST_CASE("short candidate lists are recorded in the report") {
  const auto ds = corpus(20, 40, 6);
  const Scorer zero = [](std::span<const EvalRow> part) {
    std::vector<std::vector<double>> out;
    for (const auto& row : part) out.emplace_back(row.candidates.size(), 0.0);
    return out;
  };
  const auto report = evaluate_scorer(ds, data::Split::kTest, zero, {});
  CHECK(report.short_candidate_rows == report.rows);
  CHECK(report.min_candidates < 100);
  CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("rankings are invariant under monotone score transforms") {
  const auto ds = corpus(60, 150, 9);
  auto make = [](bool transform) {
    return Scorer([transform](std::span<const EvalRow> part) {
      std::vector<std::vector<double>> out;
      for (const auto& row : part) {
        std::vector<double> s;
        for (int item : row.candidates) {
          const double v = table_score(4, row.user, item);
          s.push_back(transform ? 3.0 * std::exp(v) + 1.0 : v);
        }
        out.push_back(s);
      }
      return out;
    });
  };
  EvalOptions opts;
  opts.negatives = 40;
  const auto a = evaluate_scorer(ds, data::Split::kValid, make(false), opts);
  const auto b = evaluate_scorer(ds, data::Split::kValid, make(true), opts);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("group_report gives zero for identical reports and isolates a doubled group") {
  MetricsReport a;
  a.groups = {{"0-2", 10, {0.1, 0.2, 0.3, 0.15, 0.2}}, {"3-5", 8, {0.2, 0.3, 0.4, 0.25, 0.3}}, {">=6", 0, {}}};
  for (const auto& imp : group_report(a, a)) {
    if (imp.empty) continue;
    for (const auto& r : imp.relative) CHECK(*r == 0.0);
  }
  auto b = a;
  b.groups[1].metrics.ndcg5 *= 2;
  b.groups[1].metrics.ndcg10 *= 2;
  const auto imps = group_report(a, b);
  CHECK(*imps[0].relative[3] == 0.0);
  CHECK(*imps[1].relative[3] == doctest::Approx(1.0));
  CHECK(*imps[1].relative[4] == doctest::Approx(1.0));
  CHECK(*imps[1].relative[0] == 0.0);
  CHECK(imps[2].empty);
  CHECK_FALSE(imps[2].relative[3].has_value());
}

TEST_CASE("report JSON round-trips") {
  MetricsReport r;
  r.split = "test";
  r.rows = 3;
  r.overall = {0.1, 0.5, 0.6, 0.3, 0.35};
  r.groups = {{"0-2", 3, r.overall}};
  r.group_boundaries = {2};
  r.negative_seed = 42;
  r.candidate_list_size = 100;
  r.config = {{"k", 1}};
  const auto path = scratch("report") / "r.json";
  write_report(path, r);
  CHECK(read_report(path).to_json() == r.to_json());
}

TEST_CASE("early stopping with patience 1 halts after a worse epoch") {
  EarlyStopper s(1);
  CHECK(s.update(0.5));
  CHECK_FALSE(s.should_stop());
  CHECK_FALSE(s.update(0.4));
  CHECK(s.should_stop());
  CHECK(s.best_epoch() == 1);

  const auto dir = scratch("patience");
  auto c = tiny_experiment(dir);
  c.train.epochs = 10;
  c.train.patience = 1;
  const auto s1 = stage1(c);
  TrainHooks hooks;
  hooks.valid_metric = [](int epoch, const model::Recommender&) { return 1.0 / epoch; };
  const auto stage = run_model(s1.dataset, s1.codes, c, hooks);
  CHECK(stage.result.trace.size() == 2);
  CHECK(stage.result.stopped_early);
  CHECK(stage.result.best_epoch == 1);
}

TEST_CASE("training examples skip held-out events and first positions") {
  const auto ds = corpus(30, 80, 12);
  const auto a = training_examples(ds, 2, 5, 1);
  const auto b = training_examples(ds, 2, 5, 1);
  REQUIRE(a.size() == b.size());
  std::size_t expected = 0;
  for (const auto& u : ds.users) {
    for (int k = 1; k < u.num_rec(); ++k) expected += u.rec_split[static_cast<std::size_t>(k)] == data::Split::kTrain;
  }
  CHECK(a.size() == expected);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].candidates == b[i].candidates);
    const auto& u = ds.users[static_cast<std::size_t>(a[i].user)];
    CHECK(a[i].target >= 1);
    CHECK(u.rec_split[static_cast<std::size_t>(a[i].target)] == data::Split::kTrain);
    CHECK(a[i].labels == std::vector<double>{1.0, 0.0, 0.0});
    const auto touched = data::interacted_items(u);
    for (std::size_t j = 1; j < a[i].candidates.size(); ++j) {
      CHECK_FALSE(std::binary_search(touched.begin(), touched.end(), a[i].candidates[j]));
    }
  }
}

TEST_CASE("two-epoch smoke run leaves a loadable checkpoint") {
  const auto dir = scratch("smoke");
  const auto c = tiny_experiment(dir);
  const auto s1 = stage1(c);
  const auto stage = run_model(s1.dataset, s1.codes, c);
  CHECK(stage.result.trace.size() == 2);
  for (const auto& e : stage.result.trace) CHECK(std::isfinite(e.loss));
  check_bounds(stage.test.overall);
  CHECK(stage.test.config.at("train.epochs") == "2");

  const auto path = dir / "model.ckpt";
  model::save_recommender(path, stage.model, {{"train", c.train.to_json()}});
  const auto [loaded, extra] = model::load_recommender(path);
  CHECK(extra.at("train").at("epochs") == 2);
  const auto again = evaluate(loaded, s1.dataset, data::Split::kTest, c.eval_options());
  CHECK(again.overall.to_json() == stage.test.overall.to_json());

  write_trace(dir / "trace.jsonl", stage.result.trace);
  std::ifstream in(dir / "trace.jsonl");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 2);
}

TEST_CASE("seeded runs reproduce identical reports") {
  const auto c = tiny_experiment(scratch("determinism"));
  const auto s1 = stage1(c);
  const auto a = run_model(s1.dataset, s1.codes, c).test;
  const auto s2 = stage1(c);
  const auto b = run_model(s2.dataset, s2.codes, c).test;
  CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("sweeps and ablations") {
  const auto c = tiny_experiment(scratch("sweep"));
  const auto s1 = stage1(c);

  const auto single = sweep(s1.dataset, c, s1.matrices, s1.codes, SweepParam::kLambdaHisCl, {c.model.lambda_hiscl});
  REQUIRE(single.size() == 1);
  const auto direct = run_model(s1.dataset, s1.codes, c).test;
  CHECK(single[0].report.overall.to_json() == direct.overall.to_json());

  const auto two = sweep(s1.dataset, c, s1.matrices, s1.codes, SweepParam::kLambdaHisCl, {0.0, 1e-2});
  REQUIRE(two.size() == 2);
  CHECK(two[0].report.config.at("model.lambda_hiscl") != two[1].report.config.at("model.lambda_hiscl"));
  CHECK(two[1].report.config.at("sweep").at("value") == 1e-2);

  CHECK_THROWS(sweep(s1.dataset, c, s1.matrices, s1.codes, SweepParam::kLambdaUcl, {}));
  CHECK_THROWS(parse_sweep_param("lambda_x"));
  CHECK_THROWS(apply_ablation(c, "no_everything"));

  const auto baseline = run_ablation(s1.dataset, c, s1.matrices, s1.codes, {});
  REQUIRE(baseline.size() == 1);
  CHECK(baseline[0].name == "baseline");

  CHECK(apply_ablation(c, "no_rq_cl").rq.lambda_cl == 0.0);
  CHECK_FALSE(apply_ablation(c, "no_uc_graph").model.use_graph);
  CHECK(apply_ablation(c, "no_u_cl").model.lambda_ucl == 0.0);
  CHECK(apply_ablation(c, "no_his_cl").model.lambda_hiscl == 0.0);
  CHECK_FALSE(apply_ablation(c, "no_mca").model.use_mca);
}

TEST_CASE("all five ablations change the scores") {
  auto c = tiny_experiment(scratch("ablate"));
  c.rq.lambda_cl = 1.0;
  c.rq.epochs = 20;
  const auto s1 = stage1(c);
  const auto runs = run_ablation(s1.dataset, c, s1.matrices, s1.codes, kAblationToggles);
  REQUIRE(runs.size() == 6);
  // Compare raw scores of the trained models rather than rounded metrics.
  const auto base = run_model(s1.dataset, s1.codes, c);
  const auto rows = build_eval_rows(s1.dataset, data::Split::kTest, c.eval_options());
  const auto base_scores = model_scorer(base.model, s1.dataset)(rows);
  for (const auto& toggle : kAblationToggles) {
    const auto cfg = apply_ablation(c, toggle);
    auto codes = s1.codes;
    if (toggle == "no_rq_cl") codes = run_quantizer(s1.matrices, cfg).codes;
    const auto stage = run_model(s1.dataset, codes, cfg);
    CHECK_MESSAGE(model_scorer(stage.model, s1.dataset)(rows) != base_scores, toggle);
  }
}

TEST_CASE("training loss falls over the first ten epochs") {
  auto c = tiny_experiment(scratch("bce"));
  c.synth.users = 200;
  c.synth.items = 500;
  c.synth.clusters = 4;
  c.train.epochs = 10;
  c.train.patience = 100;
  c.train.batch_size = 256;
  const auto s1 = stage1(c);
  TrainHooks hooks;
  hooks.valid_metric = [](int, const model::Recommender&) { return 0.0; };
  const auto stage = run_model(s1.dataset, s1.codes, c, hooks);
  REQUIRE(stage.result.trace.size() == 10);
  CHECK(stage.result.trace[9].rec < stage.result.trace[0].rec);
}

TEST_CASE("config keys parse, echo and reject unknowns") {
  util::KeyValues kv = util::parse_key_values(default_config_text());
  const auto defaults = ExperimentConfig::from_key_values(kv);
  CHECK(defaults.to_json() == ExperimentConfig{}.to_json());
  util::apply_override(kv, "rq.hidden=32,16");
  util::apply_override(kv, "model.use_mca=false");
  util::apply_override(kv, "train.lr=1e-4");
  const auto c = ExperimentConfig::from_key_values(kv);
  CHECK(c.rq.hidden == std::vector<int>{32, 16});
  CHECK_FALSE(c.model.use_mca);
  CHECK(c.train.learning_rate == 1e-4);
  util::apply_override(kv, "model.nope=1");
  CHECK_THROWS_WITH(ExperimentConfig::from_key_values(kv), doctest::Contains("model.nope"));
  util::KeyValues bad{{"train.epochs", "ten"}};
  CHECK_THROWS(ExperimentConfig::from_key_values(bad));
}

TEST_CASE("plot files carry the expected columns") {
  const auto dir = scratch("plots");
  const auto ds = corpus(40, 80, 2);
  const auto grouping = data::group_users_by_search_count(ds, 3);
  MetricsReport a;
  for (int g = 0; g < grouping.num_groups(); ++g) a.groups.push_back({grouping.label(g), 5, {0.1, 0.2, 0.3, 0.2, 0.25}});
  auto b = a;
  b.groups[0].metrics.ndcg5 = 0.3;
  write_fig1(dir, ds, grouping, &a);
  write_fig2(dir, a, {{"variant", b}});
  write_fig7(dir, SweepParam::kLambdaUcl, {{0.1, a}, {1.0, b}});
  auto first_line = [](const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
  };
  CHECK(first_line(dir / "fig1_groups.csv") == "group,label,users,user_share,search_interactions,test_rows,NDCG@5");
  CHECK(first_line(dir / "fig2_improvements.csv") == "variant,group,label,HR@1,HR@5,HR@10,NDCG@5,NDCG@10");
  CHECK(first_line(dir / "fig7_lambda_ucl.csv") == "lambda_ucl,NDCG@5,HR@5");
  CHECK(fs::file_size(dir / "fig2_improvements.svg") > 100);
}
