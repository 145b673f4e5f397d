#include "gserec/model/recommender.hpp"

#include <stdexcept>

#include "gserec/nn/contrastive.hpp"
#include "gserec/nn/ops.hpp"
#include "gserec/util/archive.hpp"

namespace gserec::model {

namespace {

using nn::Var;

std::shared_ptr<const SparseMatrix> sparse_from(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& t) {
  auto s = std::make_shared<SparseMatrix>(rows, cols);
  s->setFromTriplets(t.begin(), t.end());
  return s;
}

/// Rows of a (rows x width) block layout mapped back to their block.
std::shared_ptr<const SparseMatrix> expand_blocks(int blocks, int rows_per_block) {
  std::vector<Triplet> t;
  for (int b = 0; b < blocks; ++b)
    for (int r = 0; r < rows_per_block; ++r) t.emplace_back(b * rows_per_block + r, b, 1.0);
  return sparse_from(static_cast<Eigen::Index>(blocks) * rows_per_block, blocks, t);
}

}  // namespace

void RecommenderConfig::validate() const {
  if (dim < 1 || heads < 1 || dim % heads != 0) throw std::invalid_argument("recommender: dim must be a positive multiple of heads");
  if (ffn_hidden < 1) throw std::invalid_argument("recommender: ffn_hidden must be >= 1");
  if (max_len_search < 1 || max_len_rec < 1) throw std::invalid_argument("recommender: history lengths must be >= 1");
  if (graph_layers < 0) throw std::invalid_argument("recommender: graph_layers must be >= 0");
  if (lambda_ucl < 0 || lambda_hiscl < 0 || lambda_reg < 0) throw std::invalid_argument("recommender: loss weights must be >= 0");
}

nlohmann::json RecommenderConfig::to_json() const {
  return {{"dim", dim},
          {"heads", heads},
          {"ffn_hidden", ffn_hidden},
          {"mlp_hidden", mlp_hidden},
          {"max_len_search", max_len_search},
          {"max_len_rec", max_len_rec},
          {"graph_layers", graph_layers},
          {"lambda_ucl", lambda_ucl},
          {"lambda_hiscl", lambda_hiscl},
          {"lambda_reg", lambda_reg},
          {"tau_init", tau_init},
          {"embedding_std", embedding_std},
          {"code_embedding_std", code_embedding_std},
          {"use_graph", use_graph},
          {"use_mca", use_mca}};
}

RecommenderConfig RecommenderConfig::from_json(const nlohmann::json& j) {
  RecommenderConfig c;
  c.dim = j.at("dim");
  c.heads = j.at("heads");
  c.ffn_hidden = j.at("ffn_hidden");
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
  c.max_len_search = j.at("max_len_search");
  c.max_len_rec = j.at("max_len_rec");
  c.graph_layers = j.at("graph_layers");
  c.lambda_ucl = j.at("lambda_ucl");
  c.lambda_hiscl = j.at("lambda_hiscl");
  c.lambda_reg = j.at("lambda_reg");
  c.tau_init = j.at("tau_init");
  c.embedding_std = j.at("embedding_std");
  c.code_embedding_std = j.at("code_embedding_std");
  c.use_graph = j.at("use_graph");
  c.use_mca = j.at("use_mca");
  return c;
}

Recommender::Recommender(const RecommenderConfig& config, int num_users, int num_items, int num_words,
                         std::shared_ptr<const rq::CodeAssignments> codes, util::Rng& rng)
    : config_(config), num_users_(num_users), num_items_(num_items), num_words_(num_words), codes_(std::move(codes)) {
  config_.validate();
  if (!codes_ || codes_->num_users() != num_users) throw std::invalid_argument("recommender: codes must cover every user");
  graph_s_ = std::make_shared<graph::UserCodeGraph>(graph::build_graph(codes_->search));
  graph_r_ = std::make_shared<graph::UserCodeGraph>(graph::build_graph(codes_->rec));

  const int d = config_.dim;
  const double sd = config_.embedding_std;
  users_ = &params_.add("user_emb", nn::normal_init(num_users, d, sd, rng));
  items_ = &params_.add("item_emb", nn::normal_init(num_items, d, sd, rng));
  words_ = &params_.add("word_emb", nn::normal_init(std::max(1, num_words), d, sd, rng));
  codes_s_ = &params_.add("search_code_emb", nn::normal_init(graph_s_->num_codes(), d, config_.code_embedding_std, rng));
  codes_r_ = &params_.add("rec_code_emb", nn::normal_init(graph_r_->num_codes(), d, config_.code_embedding_std, rng));
  pos_s_ = &params_.add("search_pos", nn::normal_init(config_.max_len_search, d, sd, rng));
  pos_r_ = &params_.add("rec_pos", nn::normal_init(config_.max_len_rec, d, sd, rng));
  tau_user_ = &params_.add("tau_user", Matrix::Constant(1, 1, config_.tau_init));
  tau_hist_ = &params_.add("tau_hist", Matrix::Constant(1, 1, config_.tau_init));

  for (auto* ch : {&search_, &rec_}) {
    const std::string p = ch == &search_ ? "search." : "rec.";
    ch->self_attn = nn::MultiHeadAttention(params_, p + "self_attn", d, config_.heads, rng);
    ch->norm1 = nn::LayerNorm(params_, p + "norm1", d);
    ch->ffn = nn::FeedForward(params_, p + "ffn", d, config_.ffn_hidden, rng);
    ch->norm2 = nn::LayerNorm(params_, p + "norm2", d);
    ch->fuse_attn = nn::MultiHeadAttention(params_, p + "fuse_attn", d, config_.heads, rng);
    ch->norm3 = nn::LayerNorm(params_, p + "norm3", d);
    ch->cross_attn = nn::MultiHeadAttention(params_, p + "cross_attn", d, config_.heads, rng);
    ch->norm4 = nn::LayerNorm(params_, p + "norm4", d);
    ch->fuse_ffn = nn::FeedForward(params_, p + "fuse_ffn", d, config_.ffn_hidden, rng);
    ch->norm5 = nn::LayerNorm(params_, p + "norm5", d);
    ch->pool = nn::MultiHeadAttention(params_, p + "pool", d, 1, rng, /*output_projection=*/false);
  }
  std::vector<int> widths{5 * d};
  widths.insert(widths.end(), config_.mlp_hidden.begin(), config_.mlp_hidden.end());
  widths.push_back(1);
  head_ = nn::Mlp(params_, "head", widths, rng);
}

Var Recommender::encode(nn::Tape& tape, const ChannelModules& m, Var x, const nn::AttentionLayout& layout,
                        const std::shared_ptr<const Vector>& mask) const {
  Var x1 = nn::mask_rows(m.norm1(tape, nn::add(x, m.self_attn(tape, x, x, layout))), mask);
  return nn::mask_rows(m.norm2(tape, nn::add(x1, m.ffn(tape, x1))), mask);
}

Var Recommender::fuse(nn::Tape& tape, const ChannelModules& m, Var h, Var code_rows,
                      const nn::AttentionLayout& self_layout, const nn::AttentionLayout& cross_layout,
                      const std::shared_ptr<const Vector>& mask) const {
  Var f = nn::mask_rows(m.norm3(tape, nn::add(h, m.fuse_attn(tape, h, h, self_layout))), mask);
  Var y = f;
  if (code_rows.valid()) {
    y = nn::mask_rows(m.norm4(tape, nn::add(f, m.cross_attn(tape, f, code_rows, cross_layout))), mask);
  }
  return nn::mask_rows(m.norm5(tape, nn::add(y, m.fuse_ffn(tape, y))), mask);
}

Recommender::Output Recommender::forward(nn::Tape& tape, const BatchFeatures& f) const {
  Output out;
  const int B = f.batch;
  const int L = codes_->levels;
  const Var eu = tape.leaf(*users_);
  const Var ei = tape.leaf(*items_);
  const Var ew = tape.leaf(*words_);
  const Var cs0 = tape.leaf(*codes_s_);
  const Var cr0 = tape.leaf(*codes_r_);

  // User and code representations.
  Var users_s = eu, users_r = eu, codes_s = cs0, codes_r = cr0;
  if (config_.use_graph) {
    const auto ps = graph::propagate(*graph_s_, eu, cs0, config_.graph_layers);
    const auto pr = graph::propagate(*graph_r_, eu, cr0, config_.graph_layers);
    users_s = ps.users;
    codes_s = ps.codes;
    users_r = pr.users;
    codes_r = pr.codes;
  }
  const auto pick_users = nn::one_hot_rows(f.users, num_users_);
  out.user_search = nn::sparse_matmul(pick_users, users_s);
  out.user_rec = nn::sparse_matmul(pick_users, users_r);

  // History embeddings.
  const Var er = nn::add(nn::sparse_matmul(f.rec_items, ei), nn::sparse_matmul(f.rec_pos, tape.leaf(*pos_r_)));
  const Var es = nn::add(nn::add(nn::sparse_matmul(f.search_words, ew), nn::sparse_matmul(f.search_clicks, ei)),
                         nn::sparse_matmul(f.search_pos, tape.leaf(*pos_s_)));
  nn::AttentionLayout self_s{B, f.search_rows, f.search_rows, f.search_len, f.search_len};
  nn::AttentionLayout self_r{B, f.rec_rows, f.rec_rows, f.rec_len, f.rec_len};
  out.hist_search = encode(tape, search_, es, self_s, f.search_mask);
  out.hist_rec = encode(tape, rec_, er, self_r, f.rec_mask);

  // Each example's own code sequence.
  std::vector<Triplet> gs, gr;
  for (int b = 0; b < B; ++b) {
    const auto u = static_cast<std::size_t>(f.users[static_cast<std::size_t>(b)]);
    for (int l = 0; l < L; ++l) {
      gs.emplace_back(b * L + l, graph_s_->user_codes[u][static_cast<std::size_t>(l)], 1.0);
      gr.emplace_back(b * L + l, graph_r_->user_codes[u][static_cast<std::size_t>(l)], 1.0);
    }
  }
  Var code_rows_s, code_rows_r;
  if (config_.use_graph && config_.use_mca) {
    code_rows_s = nn::sparse_matmul(sparse_from(B * L, graph_s_->num_codes(), gs), codes_s);
    code_rows_r = nn::sparse_matmul(sparse_from(B * L, graph_r_->num_codes(), gr), codes_r);
  }
  const std::vector<int> code_len(static_cast<std::size_t>(B), L);
  nn::AttentionLayout cross_s{B, f.search_rows, L, f.search_len, code_len};
  nn::AttentionLayout cross_r{B, f.rec_rows, L, f.rec_len, code_len};
  out.fused_search = fuse(tape, search_, out.hist_search, code_rows_s, self_s, cross_s, f.search_mask);
  out.fused_rec = fuse(tape, rec_, out.hist_rec, code_rows_r, self_r, cross_r, f.rec_mask);

  // Target-attention pooling and the prediction head.
  const Var cand = nn::sparse_matmul(nn::one_hot_rows(f.candidates, num_items_), ei);
  nn::AttentionLayout pool_s{B, f.cand_rows, f.search_rows, f.cand_len, f.search_len};
  nn::AttentionLayout pool_r{B, f.cand_rows, f.rec_rows, f.cand_len, f.rec_len};
  out.pooled_search = search_.pool(tape, cand, out.fused_search, pool_s);
  out.pooled_rec = rec_.pool(tape, cand, out.fused_rec, pool_r);
  const auto expand = expand_blocks(B, f.cand_rows);
  const Var parts[] = {nn::sparse_matmul(expand, out.user_search), nn::sparse_matmul(expand, out.user_rec),
                       out.pooled_search, out.pooled_rec, cand};
  out.scores = nn::sigmoid(head_(tape, nn::concat_cols(parts)));
  if (!f.labels) return out;

  out.rec_loss = nn::binary_cross_entropy(out.scores, f.labels);

  // Alignment losses over the distinct users of the batch.
  const auto pick_unique = nn::one_hot_rows(f.unique_examples, B);
  out.ucl = nn::symmetric_info_nce(nn::sparse_matmul(pick_unique, out.user_search),
                                   nn::sparse_matmul(pick_unique, out.user_rec), tape.leaf(*tau_user_));

  auto history_term = [&](bool search) -> Var {
    const auto& lens = search ? f.search_len : f.rec_len;
    const int rows = search ? f.search_rows : f.rec_rows;
    const auto& g = search ? *graph_s_ : *graph_r_;
    std::vector<Triplet> hmean, cmean;
    int n = 0;
    for (int b : f.unique_examples) {
      const int len = lens[static_cast<std::size_t>(b)];
      if (len == 0) continue;  // nothing to align for an empty channel
      for (int j = 0; j < len; ++j) hmean.emplace_back(n, b * rows + j, 1.0 / len);
      for (int c : g.user_codes[static_cast<std::size_t>(f.users[static_cast<std::size_t>(b)])]) {
        cmean.emplace_back(n, c, 1.0 / L);
      }
      ++n;
    }
    if (n == 0) return {};
    const Var h = nn::sparse_matmul(sparse_from(n, static_cast<Eigen::Index>(B) * rows, hmean),
                                    search ? out.hist_search : out.hist_rec);
    const Var e = nn::sparse_matmul(sparse_from(n, g.num_codes(), cmean), search ? codes_s : codes_r);
    return nn::symmetric_info_nce(h, e, tape.leaf(*tau_hist_));
  };
  const Var s_cl = history_term(true);
  const Var r_cl = history_term(false);
  out.hiscl_search = s_cl;
  out.hiscl_rec = r_cl;
  if (s_cl.valid() && r_cl.valid()) {
    out.hiscl = nn::add(s_cl, r_cl);
  } else {
    out.hiscl = s_cl.valid() ? s_cl : r_cl;
  }

  out.objective = out.rec_loss;
  if (config_.lambda_ucl > 0) out.objective = nn::add(out.objective, nn::scale(out.ucl, config_.lambda_ucl));
  if (config_.lambda_hiscl > 0 && out.hiscl.valid()) {
    out.objective = nn::add(out.objective, nn::scale(out.hiscl, config_.lambda_hiscl));
  }
  return out;
}

double Recommender::regularization() const { return config_.lambda_reg * params_.squared_norm(); }

void Recommender::add_regularization_grad() {
  if (config_.lambda_reg == 0) return;
  for (auto* p : params_.all()) p->grad += 2.0 * config_.lambda_reg * p->value;
}

void Recommender::clamp_temperatures() {
  nn::clamp_temperature(*tau_user_);
  nn::clamp_temperature(*tau_hist_);
}

void Recommender::round_to_f32() {
  for (auto* p : params_.all()) util::round_to_f32(p->value);
}

std::vector<double> Recommender::score(const BatchFeatures& features) const {
  nn::Tape tape(false);
  BatchFeatures unlabeled = features;
  unlabeled.labels.reset();
  const auto out = forward(tape, unlabeled);
  const Matrix& s = out.scores.value();
  return std::vector<double>(s.data(), s.data() + s.size());
}

void save_recommender(const std::filesystem::path& path, const Recommender& model, const nlohmann::json& extra_meta) {
  util::Archive archive;
  archive.kind = "recommender";
  archive.meta["config"] = model.config().to_json();
  archive.meta["num_users"] = model.num_users();
  archive.meta["num_items"] = model.num_items();
  archive.meta["num_words"] = model.num_words();
  const auto& codes = model.codes();
  archive.meta["codes"] = {{"levels", codes.levels},
                           {"codebook_size", codes.codebook_size},
                           {"search", codes.search},
                           {"rec", codes.rec}};
  archive.meta["extra"] = extra_meta;
  for (const auto* p : model.params().all()) archive.tensors.push_back({p->name, p->value});
  util::write_archive(path, archive);
}

std::pair<Recommender, nlohmann::json> load_recommender(const std::filesystem::path& path) {
  const auto archive = util::read_archive(path);
  if (archive.kind != "recommender") throw std::runtime_error(path.string() + " is not a recommender checkpoint");
  const auto& m = archive.meta;
  auto codes = std::make_shared<rq::CodeAssignments>();
  codes->levels = m.at("codes").at("levels");
  codes->codebook_size = m.at("codes").at("codebook_size");
  codes->search = m.at("codes").at("search").get<std::vector<std::vector<int>>>();
  codes->rec = m.at("codes").at("rec").get<std::vector<std::vector<int>>>();
  util::Rng rng(0);
  Recommender model(RecommenderConfig::from_json(m.at("config")), m.at("num_users"), m.at("num_items"),
                    m.at("num_words"), codes, rng);
  for (auto* p : model.params().all()) {
    const Matrix& v = archive.tensor(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint tensor " + p->name + " has the wrong shape");
    }
    p->value = v;
  }
  return {std::move(model), m.value("extra", nlohmann::json::object())};
}

}  // namespace gserec::model
