#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "json.hpp"

#include "gserec/graph/user_code_graph.hpp"
#include "gserec/model/features.hpp"
#include "gserec/nn/modules.hpp"
#include "gserec/nn/tape.hpp"
#include "gserec/rq/codes.hpp"

namespace gserec::model {

struct RecommenderConfig {
  int dim = 64;
  int heads = 2;
  int ffn_hidden = 128;
  std::vector<int> mlp_hidden{64, 32};
  int max_len_search = 20;
  int max_len_rec = 20;
  int graph_layers = 2;
  double lambda_ucl = 0.1;
  double lambda_hiscl = 0.01;
  double lambda_reg = 1e-6;
  double tau_init = 0.1;
  double embedding_std = 0.1;
  double code_embedding_std = 0.02;
  bool use_graph = true;  ///< false: raw E_U for both user vectors, no code fusion
  bool use_mca = true;    ///< false: skip cross-attention to the code sequence

  void validate() const;
  nlohmann::json to_json() const;
  static RecommenderConfig from_json(const nlohmann::json& j);
};

/// Search-enhanced sequential recommender over user-code graphs.
class Recommender {
 public:
  Recommender(const RecommenderConfig& config, int num_users, int num_items, int num_words,
              std::shared_ptr<const rq::CodeAssignments> codes, util::Rng& rng);
  Recommender(Recommender&&) = default;
  Recommender& operator=(Recommender&&) = default;

  const RecommenderConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const graph::UserCodeGraph& search_graph() const { return *graph_s_; }
  const graph::UserCodeGraph& rec_graph() const { return *graph_r_; }
  const rq::CodeAssignments& codes() const { return *codes_; }
  int num_users() const { return num_users_; }
  int num_items() const { return num_items_; }
  int num_words() const { return num_words_; }

  struct Output {
    nn::Var scores;  ///< (B*C) x 1 probabilities, padded candidate rows included
    nn::Var rec_loss, ucl, hiscl;  ///< invalid when not computed
    nn::Var hiscl_search, hiscl_rec; ///< per-channel parts of hiscl; invalid for an empty channel
    nn::Var objective;             ///< everything except the L2 term
    nn::Var user_search, user_rec; ///< e_u^s, e_u^r for the batch (B x d)
    nn::Var hist_search, hist_rec; ///< H_s, H_r
    nn::Var fused_search, fused_rec; ///< W_s, W_r
    nn::Var pooled_search, pooled_rec; ///< w_s, w_r per candidate
  };

  /// Records the forward pass. Losses are only formed when `features.labels` is set.
  Output forward(nn::Tape& tape, const BatchFeatures& features) const;

  double regularization() const;
  /// Adds d(lambda_reg ||theta||^2)/d theta to the parameter gradients.
  void add_regularization_grad();
  void clamp_temperatures();
  void round_to_f32();

  /// Scores without recording gradients.
  std::vector<double> score(const BatchFeatures& features) const;

 private:
  struct ChannelModules {
    nn::MultiHeadAttention self_attn;
    nn::LayerNorm norm1, norm2;
    nn::FeedForward ffn;
    nn::MultiHeadAttention fuse_attn;
    nn::LayerNorm norm3;
    nn::MultiHeadAttention cross_attn;
    nn::LayerNorm norm4;
    nn::FeedForward fuse_ffn;
    nn::LayerNorm norm5;
    nn::MultiHeadAttention pool;
  };

  nn::Var encode(nn::Tape& tape, const ChannelModules& m, nn::Var x, const nn::AttentionLayout& layout,
                 const std::shared_ptr<const Vector>& mask) const;
  nn::Var fuse(nn::Tape& tape, const ChannelModules& m, nn::Var h, nn::Var code_rows,
               const nn::AttentionLayout& self_layout, const nn::AttentionLayout& cross_layout,
               const std::shared_ptr<const Vector>& mask) const;

  RecommenderConfig config_;
  int num_users_, num_items_, num_words_;
  std::shared_ptr<const rq::CodeAssignments> codes_;
  std::shared_ptr<const graph::UserCodeGraph> graph_s_, graph_r_;
  nn::ParameterSet params_;
  nn::Parameter *users_ = nullptr, *items_ = nullptr, *words_ = nullptr;
  nn::Parameter *codes_s_ = nullptr, *codes_r_ = nullptr;
  nn::Parameter *pos_s_ = nullptr, *pos_r_ = nullptr;
  nn::Parameter *tau_user_ = nullptr, *tau_hist_ = nullptr;
  ChannelModules search_, rec_;
  nn::Mlp head_;
};

void save_recommender(const std::filesystem::path& path, const Recommender& model,
                      const nlohmann::json& extra_meta = nlohmann::json::object());
/// Returns the model and the stored extra metadata.
std::pair<Recommender, nlohmann::json> load_recommender(const std::filesystem::path& path);

}  // namespace gserec::model
