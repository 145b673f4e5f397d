#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "support/gradcheck.hpp"

#include "gserec/data/split.hpp"
#include "gserec/data/synthetic.hpp"
#include "gserec/model/features.hpp"
#include "gserec/model/recommender.hpp"
#include "gserec/nn/ops.hpp"

using namespace gserec;
using namespace gserec::model;

namespace {

Matrix random_matrix(int rows, int cols, util::Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::shared_ptr<rq::CodeAssignments> random_codes(int users, int levels, int size, util::Rng& rng) {
  auto c = std::make_shared<rq::CodeAssignments>();
  c->levels = levels;
  c->codebook_size = size;
  for (int u = 0; u < users; ++u) {
    c->search.emplace_back();
    c->rec.emplace_back();
    for (int l = 0; l < levels; ++l) {
      c->search.back().push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(size))));
      c->rec.back().push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(size))));
    }
  }
  return c;
}

RecommenderConfig tiny_config() {
  RecommenderConfig c;
  c.dim = 4;
  c.heads = 2;
  c.ffn_hidden = 5;
  c.mlp_hidden = {3};
  c.max_len_search = 4;
  c.max_len_rec = 4;
  c.graph_layers = 2;
  c.lambda_ucl = 0.3;
  c.lambda_hiscl = 0.2;
  c.lambda_reg = 1e-3;
  c.tau_init = 0.5;
  c.embedding_std = 0.5;
  c.code_embedding_std = 0.5;
  return c;
}

data::Dataset toy_dataset(int users, std::uint64_t seed) {
  data::SynthConfig cfg;
  cfg.users = users;
  cfg.items = 24;
  cfg.clusters = 2;
  cfg.min_rec = 4;
  cfg.max_rec = 6;
  cfg.max_search = 4;
  cfg.sparse_fraction = 0.0;
  cfg.seed = seed;
  return data::generate_synthetic_dataset(cfg).dataset;
}

std::vector<Example> training_examples(const data::Dataset& ds) {
  std::vector<Example> out;
  for (const auto& u : ds.users) {
    const int t = u.rec_index(data::Split::kValid) - 1;
    const int pos = u.rec[static_cast<std::size_t>(t)].item;
    out.push_back({u.id, t, {pos, (pos + 5) % ds.num_items()}, {1.0, 0.0}});
  }
  return out;
}

void set_all(nn::ParameterSet& params, const std::string& prefix, double value) {
  for (auto* p : params.all()) {
    if (p->name.rfind(prefix, 0) == 0) p->value.setConstant(value);
  }
}

}  // namespace

TEST_CASE("query embedding is the mean of its word embeddings") {
  data::Dataset ds;
  ds.items = {{0, "a", "a"}};
  ds.vocab = {"w0", "w1", "w2", "w3", "w4", "w5"};
  ds.queries = {{0, "w0", {0}}, {1, "w0 w1", {0, 1}}, {2, "w1 w2 w3 w4 w5", {1, 2, 3, 4, 5}}};
  data::UserHistory u;
  u.search = {{0, {}, 1}, {1, {}, 2}, {2, {}, 3}};
  ds.users.push_back(u);
  ds = data::leave_one_out_split(std::move(ds));
  FeatureBuilder fb(ds, 5, 5);
  const std::vector<Example> ex{{0, -1, {0}, {}}};
  const auto f = fb.build(ex);
  util::Rng rng(1);
  Matrix words = random_matrix(6, 2, rng);
  words.row(0) << 1, 0;
  words.row(1) << 0, 1;
  const Matrix q = (*f.search_words) * words;
  CHECK(q.row(0) == words.row(0));
  CHECK(q(1, 0) == doctest::Approx(0.5));
  CHECK(q(1, 1) == doctest::Approx(0.5));
  for (int c = 0; c < 2; ++c) {
    double naive = 0;
    for (int w = 1; w <= 5; ++w) naive += words(w, c);
    CHECK(std::abs(q(2, c) - naive / 5) < 1e-7);
  }
}

TEST_CASE("features: recency positions, truncation and click means") {
  data::Dataset ds;
  for (int i = 0; i < 8; ++i) ds.items.push_back({i, "i" + std::to_string(i), ""});
  ds.vocab = {"q"};
  ds.queries = {{0, "q", {0}}};
  data::UserHistory u;
  for (int i = 0; i < 7; ++i) u.rec.push_back({i, 10 * (i + 1)});
  u.search = {{0, {6, 7}, 5}, {0, {3}, 25}};
  ds.users.push_back(u);
  ds = data::leave_one_out_split(std::move(ds));
  FeatureBuilder fb(ds, 4, 3);
  // Predict rec[5] (the validation item): context is rec[0..4], truncated to the last 3.
  const std::vector<Example> ex{{0, 5, {1}, {}}};
  const auto f = fb.build(ex);
  CHECK(f.rec_len[0] == 3);
  const Matrix items = Matrix::Identity(8, 8);
  const Matrix rows = (*f.rec_items) * items;
  CHECK(rows(0, 2) == 1.0);
  CHECK(rows(2, 4) == 1.0);
  const Matrix pos = (*f.rec_pos) * Matrix::Identity(3, 3);
  CHECK(pos(2, 0) == 1.0);  // most recent -> position 0
  CHECK(pos(0, 2) == 1.0);
  // The test item (6) is held out of search clicks for a validation target.
  CHECK(f.search_len[0] == 2);
  const Matrix clicks = (*f.search_clicks) * items;
  CHECK(clicks(0, 7) == 1.0);
  CHECK(clicks(0, 6) == 0.0);
  CHECK(clicks(1, 3) == 1.0);
}

TEST_CASE("encoder block matches a hand computation") {
  // One head, identity projections, zero feed-forward: H = LN(LN(x + A(x))).
  data::Dataset ds;
  for (int i = 0; i < 3; ++i) ds.items.push_back({i, "i" + std::to_string(i), ""});
  data::UserHistory u;
  for (int i = 0; i < 3; ++i) u.rec.push_back({i, i + 1});
  u.rec.push_back({0, 10});
  ds.users.push_back(u);
  ds.users[0].rec_split.clear();
  ds = data::leave_one_out_split(std::move(ds));
  auto cfg = tiny_config();
  cfg.heads = 1;
  cfg.dim = 3;
  cfg.max_len_rec = 3;
  util::Rng rng(2);
  auto codes = random_codes(1, 2, 2, rng);
  Recommender model(cfg, 1, 3, 0, codes, rng);
  for (auto* p : model.params().all()) {
    const auto& n = p->name;
    if (n.rfind("rec.self_attn", 0) == 0) p->value = n.ends_with("weight") ? Matrix(Matrix::Identity(3, 3)) : Matrix(Matrix::Zero(1, 3));
    if (n.rfind("rec.ffn", 0) == 0) p->value.setZero();
  }
  model.params().at("rec_pos").value.setZero();
  Matrix x(3, 3);
  x << 1, 0, 0.5, 0, 2, 0, -1, 1, 1;
  model.params().at("item_emb").value = x;

  FeatureBuilder fb(ds, cfg.max_len_search, cfg.max_len_rec);
  const std::vector<Example> ex{{0, 3, {0}, {}}};  // context: items 0,1,2
  nn::Tape tape(false);
  const auto out = model.forward(tape, fb.build(ex));
  const Matrix& h = out.hist_rec.value();

  auto layer_norm = [](const RowVector& r) {
    const double mean = r.mean();
    const double var = (r.array() - mean).square().mean();
    return RowVector((r.array() - mean) / std::sqrt(var + 1e-5));
  };
  for (int i = 0; i < 3; ++i) {
    double w[3], z = 0;
    for (int j = 0; j < 3; ++j) {
      w[j] = std::exp(x.row(i).dot(x.row(j)) / std::sqrt(3.0));
      z += w[j];
    }
    RowVector att = RowVector::Zero(3);
    for (int j = 0; j < 3; ++j) att += (w[j] / z) * x.row(j);
    const RowVector expected = layer_norm(layer_norm(x.row(i) + att));
    CHECK((h.row(i) - expected).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("cross-attention over one code, or duplicated codes, is constant across rows") {
  util::Rng rng(3);
  nn::ParameterSet params;
  nn::MultiHeadAttention mca(params, "mca", 4, 2, rng);
  const Matrix f = random_matrix(3, 4, rng);
  const Matrix code = random_matrix(1, 4, rng);
  Matrix dup(3, 4);
  dup << code, code, code;
  nn::Tape tape(false);
  const auto one = mca(tape, tape.constant(f), tape.constant(code), {1, 3, 1, {3}, {1}}).value();
  const auto three = mca(tape, tape.constant(f), tape.constant(dup), {1, 3, 3, {3}, {3}}).value();
  for (int i = 1; i < 3; ++i) CHECK((one.row(i) - one.row(0)).norm() < 1e-12);
  CHECK((one - three).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("target-attention pooling") {
  util::Rng rng(4);
  nn::ParameterSet params;
  nn::MultiHeadAttention pool(params, "pool", 4, 1, rng, false);
  const Matrix target = random_matrix(1, 4, rng);
  const Matrix rows = random_matrix(4, 4, rng);
  const auto& wq = pool.query_proj().weight().value;
  const auto& bq = pool.query_proj().bias()->value;
  const auto& wk = pool.key_proj().weight().value;
  const auto& bk = pool.key_proj().bias()->value;
  const auto& wv = pool.value_proj().weight().value;
  const auto& bv = pool.value_proj().bias()->value;
  nn::Tape tape(false);
  SUBCASE("one row gives its value projection") {
    const auto w = pool(tape, tape.constant(target), tape.constant(rows.topRows(1)), {1, 1, 1, {1}, {1}}).value();
    CHECK((w - (rows.topRows(1) * wv + bv)).norm() < 1e-12);
    Matrix twice(2, 4);
    twice << rows.row(0), rows.row(0);
    const auto w2 = pool(tape, tape.constant(target), tape.constant(twice), {1, 1, 2, {1}, {2}}).value();
    CHECK((w - w2).norm() < 1e-12);
  }
  SUBCASE("four rows against a scalar oracle") {
    const auto w = pool(tape, tape.constant(target), tape.constant(rows), {1, 1, 4, {1}, {4}}).value();
    const RowVector q = target * wq + bq;
    double logits[4], m = -1e300, z = 0;
    for (int j = 0; j < 4; ++j) {
      const RowVector k = rows.row(j) * wk + bk;
      logits[j] = q.dot(k) / 2.0;
      m = std::max(m, logits[j]);
    }
    for (double l : logits) z += std::exp(l - m);
    RowVector expected = RowVector::Zero(4);
    for (int j = 0; j < 4; ++j) expected += std::exp(logits[j] - m) / z * (rows.row(j) * wv + bv);
    CHECK((w - expected).cwiseAbs().maxCoeff() < 1e-5);
  }
  SUBCASE("empty history pools to zero") {
    const auto w = pool(tape, tape.constant(target), tape.constant(rows), {1, 1, 4, {1}, {0}}).value();
    CHECK(w.norm() == 0.0);
  }
}

TEST_CASE("prediction head") {
  const auto ds = toy_dataset(3, 5);
  util::Rng rng(6);
  auto codes = random_codes(3, 2, 3, rng);
  Recommender model(tiny_config(), 3, ds.num_items(), ds.num_words(), codes, rng);
  FeatureBuilder fb(ds, 4, 4);
  const auto ex = training_examples(ds);
  const auto f = fb.build(ex);
  SUBCASE("deterministic") { CHECK(model.score(f) == model.score(f)); }
  SUBCASE("zero head gives one half and log 2") {
    set_all(model.params(), "head", 0.0);
    for (double s : model.score(f)) CHECK(s == 0.5);
    auto cfg = tiny_config();
    nn::Tape tape(false);
    const auto out = model.forward(tape, f);
    CHECK(out.rec_loss.value()(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("raising the final bias raises every score") {
    const auto before = model.score(f);
    model.params().at("head.1.bias").value.array() += 0.3;
    const auto after = model.score(f);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] > before[i]);
  }
}

TEST_CASE("padding never changes scores or losses") {
  const auto ds = toy_dataset(3, 7);
  util::Rng rng(8);
  auto codes = random_codes(3, 2, 3, rng);
  Recommender model(tiny_config(), 3, ds.num_items(), ds.num_words(), codes, rng);
  FeatureBuilder fb(ds, 4, 4);
  // User 0 alone, then padded up to the longest history in a larger batch.
  std::vector<Example> alone{{0, 1, {2, 3, 4}, {}}};
  std::vector<Example> padded{{0, 1, {2, 3, 4}, {}}, {1, -1, {5}, {}}, {2, -1, {6, 7}, {}}};
  const auto a = model.score(fb.build(alone));
  const auto fb_padded = fb.build(padded);
  CHECK(fb_padded.rec_rows > fb.build(alone).rec_rows);
  const auto b = model.score(fb_padded);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)]) < 1e-12);
}

TEST_CASE("total loss matches central finite differences") {
  const auto ds = toy_dataset(3, 9);
  util::Rng rng(10);
  auto codes = random_codes(3, 2, 3, rng);
  Recommender model(tiny_config(), 3, ds.num_items(), ds.num_words(), codes, rng);
  FeatureBuilder fb(ds, 4, 4);
  const auto f = fb.build(training_examples(ds));
  auto total = [&] {
    nn::Tape tape(false);
    return model.forward(tape, f).objective.value()(0, 0) + model.regularization();
  };
  {
    nn::Tape tape;
    const auto out = model.forward(tape, f);
    model.params().zero_grad();
    tape.backward(out.objective);
    model.add_regularization_grad();
    CHECK(out.ucl.valid());
    CHECK(out.hiscl.valid());
  }
  const auto r = testing::finite_difference_check(model.params().all(), total);
  INFO("worst parameter: " << r.worst_param);
  CHECK(r.worst_relative_error < 1e-4);
}

TEST_CASE("ablations cut the code path") {
  const auto ds = toy_dataset(3, 11);
  util::Rng rng(12);
  auto codes = random_codes(3, 2, 3, rng);
  auto cfg = tiny_config();
  FeatureBuilder fb(ds, 4, 4);
  const auto f = fb.build(training_examples(ds));

  SUBCASE("graph ablated with zero auxiliary weights: code tables get no gradient") {
    cfg.use_graph = false;
    cfg.lambda_ucl = cfg.lambda_hiscl = cfg.lambda_reg = 0;
    Recommender model(cfg, 3, ds.num_items(), ds.num_words(), codes, rng);
    nn::Tape tape;
    const auto out = model.forward(tape, f);
    model.params().zero_grad();
    tape.backward(out.objective);
    CHECK(model.params().at("search_code_emb").grad.norm() == 0.0);
    CHECK(model.params().at("rec_code_emb").grad.norm() == 0.0);
    CHECK(model.params().at("user_emb").grad.norm() > 0.0);
    // Both user vectors are the raw lookup.
    CHECK(out.user_search.value() == out.user_rec.value());
  }
  SUBCASE("zero user-alignment weight removes that term from the objective") {
    cfg.lambda_ucl = 0;
    Recommender model(cfg, 3, ds.num_items(), ds.num_words(), codes, rng);
    nn::Tape tape;
    const auto out = model.forward(tape, f);
    CHECK(out.objective.value()(0, 0) ==
          doctest::Approx(out.rec_loss.value()(0, 0) + cfg.lambda_hiscl * out.hiscl.value()(0, 0)).epsilon(1e-14));
    model.params().zero_grad();
    tape.backward(out.objective);
    CHECK(model.params().at("tau_user").grad(0, 0) == 0.0);
  }
  SUBCASE("without cross-attention the cross-attention weights are idle") {
    cfg.use_mca = false;
    Recommender model(cfg, 3, ds.num_items(), ds.num_words(), codes, rng);
    nn::Tape tape;
    const auto out = model.forward(tape, f);
    model.params().zero_grad();
    tape.backward(out.objective);
    CHECK(model.params().at("search.cross_attn.q.weight").grad.norm() == 0.0);
  }
}

TEST_CASE("history alignment skips users without search history") {
  data::Dataset ds;
  for (int i = 0; i < 6; ++i) ds.items.push_back({i, "i" + std::to_string(i), ""});
  ds.vocab = {"w"};
  ds.queries = {{0, "w", {0}}};
  for (int u = 0; u < 2; ++u) {
    data::UserHistory h;
    h.id = u;
    for (int i = 0; i < 4; ++i) h.rec.push_back({(i + u) % 6, i + 1});
    if (u == 0) h.search.push_back({0, {5}, 0});
    ds.users.push_back(h);
  }
  ds = data::leave_one_out_split(std::move(ds));
  util::Rng rng(13);
  auto codes = random_codes(2, 2, 3, rng);
  Recommender model(tiny_config(), 2, 6, 1, codes, rng);
  FeatureBuilder fb(ds, 4, 4);
  const std::vector<Example> ex{{0, 1, {1, 2}, {1, 0}}, {1, 1, {2, 3}, {1, 0}}};
  const auto f = fb.build(ex);
  CHECK(f.search_len[1] == 0);
  nn::Tape tape(false);
  const auto out = model.forward(tape, f);
  CHECK(std::isfinite(out.hiscl.value()(0, 0)));
  // Empty search history pools to zero for that user's candidates.
  CHECK(out.pooled_search.value().bottomRows(2).norm() == 0.0);
}

TEST_CASE("checkpoint round trip preserves scores") {
  const auto ds = toy_dataset(3, 14);
  util::Rng rng(15);
  auto codes = random_codes(3, 2, 3, rng);
  Recommender model(tiny_config(), 3, ds.num_items(), ds.num_words(), codes, rng);
  model.round_to_f32();
  FeatureBuilder fb(ds, 4, 4);
  const auto f = fb.build(training_examples(ds));
  const auto path = std::filesystem::temp_directory_path() / "gserec_model_ckpt.bin";
  save_recommender(path, model, {{"note", "x"}});
  auto [back, extra] = load_recommender(path);
  std::filesystem::remove(path);
  CHECK(extra["note"] == "x");
  CHECK(back.score(f) == model.score(f));
}
