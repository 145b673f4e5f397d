#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/gradcheck.hpp"

#include "gserec/data/synthetic.hpp"
#include "gserec/nn/contrastive.hpp"
#include "gserec/prefs/clients.hpp"
#include "gserec/prefs/pipeline.hpp"
#include "gserec/rq/codes.hpp"
#include "gserec/rq/residual.hpp"
#include "gserec/rq/rqvae.hpp"

using namespace gserec;
using namespace gserec::rq;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(int rows, int cols, util::Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Exhaustive per-level nearest neighbour with explicit loops.
std::vector<int> brute_force_codes(std::vector<double> r, const std::vector<Matrix>& books) {
  std::vector<int> codes;
  for (const auto& book : books) {
    int best = -1;
    double best_d = 0;
    for (int k = 0; k < book.rows(); ++k) {
      double d = 0;
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double diff = r[j] - book(k, static_cast<Eigen::Index>(j));
        d += diff * diff;
      }
      if (best < 0 || d < best_d) {
        best = k;
        best_d = d;
      }
    }
    codes.push_back(best);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= book(best, static_cast<Eigen::Index>(j));
  }
  return codes;
}

QuantizerConfig tiny_config() {
  QuantizerConfig c;
  c.levels = 2;
  c.codebook_size = 3;
  c.latent_dim = 3;
  c.hidden = {4};
  c.lambda_cl = 0.5;
  c.tau_init = 0.3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::stringstream s;
  s << std::ifstream(p).rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("gserec_rq_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("residual_quantize: hand examples") {
  SUBCASE("nearest of two codes") {
    Matrix book(2, 2);
    book << 0, 0, 1, 0;
    Matrix z(1, 2);
    z << 0.9, 0;
    const std::vector<Matrix> books{book};
    const auto q = residual_quantize(z, books);
    CHECK(q.codes[0][0] == 1);
    CHECK(q.residuals[1](0, 0) == doctest::Approx(-0.1));
    CHECK(q.residuals[1](0, 1) == 0.0);
  }
  SUBCASE("exact hit leaves zero residual") {
    util::Rng rng(3);
    std::vector<Matrix> books{random_matrix(5, 3, rng), random_matrix(4, 3, rng), random_matrix(4, 3, rng)};
    books[1].row(2).setZero();
    books[2].row(0).setZero();
    const Matrix z = books[0].row(3);
    const auto q = residual_quantize(z, books);
    CHECK(q.codes[0][0] == 3);
    CHECK(q.quantized.isApprox(z));
    CHECK(q.residuals.back().norm() == 0.0);
  }
  SUBCASE("ties go to the lowest index") {
    Matrix book(3, 1);
    book << 1, -1, 1;
    Matrix z = Matrix::Zero(1, 1);
    const std::vector<Matrix> books{book};
    CHECK(residual_quantize(z, books).codes[0][0] == 0);
  }
}

TEST_CASE("residual_quantize: matches exhaustive search and telescopes") {
  util::Rng rng(11);
  std::vector<Matrix> books;
  for (int l = 0; l < 4; ++l) books.push_back(random_matrix(8, 5, rng) * std::pow(0.5, l));
  const Matrix z = random_matrix(100, 5, rng);
  const auto q = residual_quantize(z, books);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> row(z.row(i).data(), z.row(i).data() + 5);
    Matrix zi = z.row(i);
    CHECK(q.codes[static_cast<std::size_t>(i)] == brute_force_codes(std::vector<double>(zi.data(), zi.data() + 5), books));
  }
  CHECK((z - q.quantized - q.residuals.back()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quantizer losses match an independent recomputation") {
  util::Rng rng(5);
  const auto cfg = tiny_config();
  RqVae model(cfg, 4, rng);
  const Matrix vs = random_matrix(3, 4, rng), vr = random_matrix(3, 4, rng);
  nn::Tape tape;
  const auto losses = model.forward(tape, vs, vr);

  double recon = 0, rq = 0;
  for (auto c : {Channel::kSearch, Channel::kRec}) {
    const Matrix& v = c == Channel::kSearch ? vs : vr;
    const auto q = model.quantize(c, v);
    recon += (v - model.decode(c, q.quantized)).squaredNorm();
    for (int l = 0; l < cfg.levels; ++l) {
      // sg(r) - e and r - sg(e) have the same value: ||r_{l-1} - e_l||^2 each.
      rq += 2.0 * q.residuals[static_cast<std::size_t>(l + 1)].squaredNorm();
    }
  }
  CHECK(losses.recon.value()(0, 0) == doctest::Approx(recon / 3).epsilon(1e-10));
  CHECK(losses.rq.value()(0, 0) == doctest::Approx(rq / 3).epsilon(1e-10));
  const double cl = nn::symmetric_info_nce(model.encode(Channel::kSearch, vs), model.encode(Channel::kRec, vr), 0.3);
  CHECK(losses.cl.value()(0, 0) == doctest::Approx(cl).epsilon(1e-10));
  CHECK(losses.total.value()(0, 0) ==
        doctest::Approx(recon / 3 + rq / 3 + 0.5 * cl).epsilon(1e-10));
}

TEST_CASE("quantizer contrastive term is symmetric in the channels") {
  util::Rng rng(8);
  const Matrix a = random_matrix(5, 3, rng), b = random_matrix(5, 3, rng);
  CHECK(nn::symmetric_info_nce(a, b, 0.1) == doctest::Approx(nn::symmetric_info_nce(b, a, 0.1)).epsilon(1e-12));
}

TEST_CASE("perfect reconstruction and exact hits give zero losses") {
  QuantizerConfig cfg;
  cfg.levels = 1;
  cfg.codebook_size = 2;
  cfg.latent_dim = 3;
  cfg.hidden = {};
  cfg.lambda_cl = 0;
  util::Rng rng(1);
  RqVae model(cfg, 3, rng);
  for (auto* p : model.params().all()) {
    if (p->name.find("weight") != std::string::npos) p->value = Matrix::Identity(3, 3);
    if (p->name.find("bias") != std::string::npos) p->value.setZero();
  }
  Matrix v(2, 3);
  v << 1, 2, 3, -1, 0, 0.5;
  model.codebook(Channel::kSearch, 0).value = v;
  model.codebook(Channel::kRec, 0).value = v;
  nn::Tape tape;
  const auto losses = model.forward(tape, v, v);
  CHECK(losses.recon.value()(0, 0) == 0.0);
  CHECK(losses.rq.value()(0, 0) == 0.0);
}

TEST_CASE("quantizer gradients match central differences") {
  util::Rng rng(21);
  const auto cfg = tiny_config();
  RqVae model(cfg, 4, rng);
  const Matrix vs = random_matrix(3, 4, rng), vr = random_matrix(3, 4, rng);

  // Gradients at the base point, snapshot taken from the same forward pass.
  Snapshot frozen;
  {
    nn::Tape tape;
    model.params().zero_grad();
    const auto losses = model.forward(tape, vs, vr, nullptr, &frozen);
    tape.backward(losses.total);
  }
  // The finite-difference objective holds codes, incoming residuals and the
  // straight-through offset fixed at their base-point values.
  const auto objective = [&] {
    nn::Tape tape(false);
    return model.forward(tape, vs, vr, &frozen).total.value()(0, 0);
  };
  const auto r = testing::finite_difference_check(model.params().all(), objective);
  INFO("worst parameter: " << r.worst_param);
  CHECK(r.worst_relative_error < 1e-4);
  CHECK(model.temperature().grad(0, 0) != 0.0);
}

TEST_CASE("commitment and codebook terms route gradients separately") {
  util::Rng rng(4);
  auto cfg = tiny_config();
  cfg.lambda_cl = 0;
  RqVae model(cfg, 4, rng);
  const Matrix vs = random_matrix(3, 4, rng), vr = random_matrix(3, 4, rng);
  nn::Tape tape;
  model.params().zero_grad();
  const auto losses = model.forward(tape, vs, vr);
  tape.backward(losses.rq);
  for (auto* p : model.params().all()) {
    INFO(p->name);
    if (p->name.find("decoder") != std::string::npos || p->name == "tau") CHECK(p->grad.norm() == 0.0);
  }
  CHECK(model.codebook(Channel::kSearch, 0).grad.norm() > 0.0);

  // The reconstruction loss never reaches the codebooks.
  nn::Tape tape2;
  model.params().zero_grad();
  const auto l2 = model.forward(tape2, vs, vr);
  tape2.backward(l2.recon);
  for (int l = 0; l < cfg.levels; ++l) CHECK(model.codebook(Channel::kRec, l).grad.norm() == 0.0);
}

TEST_CASE("training reduces reconstruction on a two-user toy") {
  QuantizerConfig cfg;
  cfg.levels = 1;
  cfg.codebook_size = 2;
  cfg.latent_dim = 4;
  cfg.hidden = {16};
  cfg.epochs = 200;
  cfg.batch_size = 2;
  Matrix vs = Matrix::Zero(2, 4), vr = Matrix::Zero(2, 4);
  vs(0, 0) = vs(1, 1) = 1;
  vr(0, 2) = vr(1, 3) = 1;
  const auto q = train_rqvae(vs, vr, cfg, 9);
  REQUIRE(q.trace.size() == 200);
  CHECK(q.trace.back().recon < 0.1 * q.trace.front().recon);
}

TEST_CASE("a zero contrastive weight leaves the trace untouched by the temperature") {
  QuantizerConfig cfg;
  cfg.levels = 2;
  cfg.codebook_size = 4;
  cfg.latent_dim = 3;
  cfg.hidden = {8};
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.lambda_cl = 0;
  util::Rng rng(2);
  const Matrix vs = random_matrix(10, 6, rng), vr = random_matrix(10, 6, rng);
  const auto a = train_rqvae(vs, vr, cfg, 17);
  cfg.tau_init = 0.9;
  const auto b = train_rqvae(vs, vr, cfg, 17);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t e = 0; e < a.trace.size(); ++e) {
    CHECK(a.trace[e].total == b.trace[e].total);
    CHECK(a.trace[e].cl == 0.0);
    CHECK(a.trace[e].total == doctest::Approx(a.trace[e].recon + a.trace[e].rq).epsilon(1e-12));
  }
}

TEST_CASE("non-finite loss aborts with the batch index") {
  QuantizerConfig cfg;
  cfg.levels = 1;
  cfg.codebook_size = 2;
  cfg.latent_dim = 2;
  cfg.hidden = {};
  cfg.epochs = 1;
  cfg.batch_size = 4;
  const Matrix vs = Matrix::Constant(4, 2, 1e200), vr = Matrix::Constant(4, 2, 1e200);
  try {
    train_rqvae(vs, vr, cfg, 1);
    FAIL("expected TrainError");
  } catch (const TrainError& e) {
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}

TEST_CASE("synthetic corpus does not collapse to one level-1 code") {
  data::SynthConfig scfg;
  scfg.users = 200;
  scfg.clusters = 4;
  const auto ds = data::generate_synthetic_dataset(scfg).dataset;
  TempDir dir("collapse");
  prefs::MockSummaryClient mock;
  prefs::HashEmbeddingClient hash(32);
  const auto prompts = prefs::render_all_prompts(ds);
  auto sum = prefs::summarize_preferences(mock, prompts, dir.path);
  const auto emb = prefs::embed_preferences(hash, sum.records, dir.path);
  const auto m = prefs::preference_matrices(emb.records, ds.num_users());

  QuantizerConfig cfg;
  cfg.codebook_size = 8;
  cfg.latent_dim = 16;
  cfg.hidden = {64};
  cfg.epochs = 40;
  cfg.batch_size = 64;
  const auto q = train_rqvae(m.search, m.rec, cfg, 5);
  const auto codes = export_codes(q.model, m.search, m.rec);
  CHECK(code_perplexity(codes.search, 0) > 1.5);
  CHECK(code_perplexity(codes.rec, 0) > 1.5);
}

TEST_CASE("export: determinism, shape and duplicate inputs") {
  util::Rng rng(6);
  QuantizerConfig cfg;
  cfg.hidden = {16};
  RqVae model(cfg, 8, rng);
  Matrix vs = random_matrix(100, 8, rng), vr = random_matrix(100, 8, rng);
  vs.row(7) = vs.row(3);
  std::vector<std::string> keys;
  for (int i = 0; i < 100; ++i) keys.push_back("user" + std::to_string(i));
  TempDir dir("export");
  const auto before = model.params().all()[0]->value;
  write_codes(dir.path / "a.jsonl", export_codes(model, vs, vr), keys);
  write_codes(dir.path / "b.jsonl", export_codes(model, vs, vr), keys);
  CHECK(slurp(dir.path / "a.jsonl") == slurp(dir.path / "b.jsonl"));
  CHECK(model.params().all()[0]->value == before);

  const auto codes = read_codes(dir.path / "a.jsonl", keys, 256);
  CHECK(codes.num_users() == 100);
  for (int u = 0; u < 100; ++u) {
    CHECK(codes.search[static_cast<std::size_t>(u)].size() == 4);
    CHECK(codes.rec[static_cast<std::size_t>(u)].size() == 4);
    for (int k : codes.search[static_cast<std::size_t>(u)]) CHECK((k >= 0 && k < 256));
  }
  CHECK(codes.search[7] == codes.search[3]);
}

TEST_CASE("checkpoint round trip reproduces codes") {
  QuantizerConfig cfg;
  cfg.levels = 2;
  cfg.codebook_size = 4;
  cfg.latent_dim = 3;
  cfg.hidden = {8};
  cfg.epochs = 3;
  cfg.batch_size = 8;
  util::Rng rng(12);
  const Matrix vs = random_matrix(20, 5, rng), vr = random_matrix(20, 5, rng);
  const auto q = train_rqvae(vs, vr, cfg, 3);
  TempDir dir("ckpt");
  save_quantizer(dir.path / "q.ckpt", q);
  const auto back = load_quantizer(dir.path / "q.ckpt");
  CHECK(back.trace.size() == q.trace.size());
  const auto pa = q.model.params().all();
  const auto pb = back.model.params().all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  const auto ca = export_codes(q.model, vs, vr);
  const auto cb = export_codes(back.model, vs, vr);
  CHECK(ca.search == cb.search);
  CHECK(ca.rec == cb.rec);
}

TEST_CASE("read_codes rejects missing users") {
  TempDir dir("missing");
  std::ofstream(dir.path / "c.jsonl") << R"({"user":"a","s":[0],"r":[1]})" << "\n";
  const std::vector<std::string> keys{"a", "b"};
  CHECK_THROWS(read_codes(dir.path / "c.jsonl", keys));
}
