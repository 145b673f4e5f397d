#include "gserec/rq/rqvae.hpp"

#include <cmath>
#include <numeric>

#include "gserec/nn/adam.hpp"
#include "gserec/nn/contrastive.hpp"
#include "gserec/nn/ops.hpp"
#include "gserec/rq/kmeans.hpp"
#include "gserec/util/archive.hpp"

namespace gserec::rq {

namespace {

constexpr Channel kChannels[] = {Channel::kSearch, Channel::kRec};
const char* channel_name(Channel c) { return c == Channel::kSearch ? "search" : "rec"; }

Matrix rows_of(const Matrix& m, const std::vector<int>& rows, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(rows[i]);
  return out;
}

}  // namespace

void QuantizerConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("quantizer: levels must be >= 1");
  if (codebook_size < 2) throw std::invalid_argument("quantizer: codebook_size must be >= 2");
  if (latent_dim < 1) throw std::invalid_argument("quantizer: latent_dim must be >= 1");
  if (lambda_rq < 0 || lambda_cl < 0) throw std::invalid_argument("quantizer: loss weights must be >= 0");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("quantizer: epochs and batch_size must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("quantizer: hidden widths must be >= 1");
  }
}

nlohmann::json QuantizerConfig::to_json() const {
  return {{"levels", levels},         {"codebook_size", codebook_size}, {"latent_dim", latent_dim},
          {"hidden", hidden},         {"lambda_rq", lambda_rq},         {"lambda_cl", lambda_cl},
          {"tau_init", tau_init},     {"epochs", epochs},               {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"kmeans_init", kmeans_init},
          {"restart_dead_codes", restart_dead_codes}};
}

QuantizerConfig QuantizerConfig::from_json(const nlohmann::json& j) {
  QuantizerConfig c;
  c.levels = j.at("levels");
  c.codebook_size = j.at("codebook_size");
  c.latent_dim = j.at("latent_dim");
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.lambda_rq = j.at("lambda_rq");
  c.lambda_cl = j.at("lambda_cl");
  c.tau_init = j.at("tau_init");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.kmeans_init = j.value("kmeans_init", true);
  c.restart_dead_codes = j.value("restart_dead_codes", true);
  return c;
}

RqVae::RqVae(const QuantizerConfig& config, int input_dim, util::Rng& rng)
    : config_(config), input_dim_(input_dim) {
  config_.validate();
  if (input_dim < 1) throw std::invalid_argument("quantizer: input_dim must be >= 1");
  std::vector<int> enc{input_dim};
  enc.insert(enc.end(), config_.hidden.begin(), config_.hidden.end());
  enc.push_back(config_.latent_dim);
  const std::vector<int> dec(enc.rbegin(), enc.rend());
  const double code_sd = 1.0 / std::sqrt(static_cast<double>(config_.latent_dim));
  for (Channel c : kChannels) {
    const std::string name = channel_name(c);
    encoders_[idx(c)] = nn::Mlp(params_, name + ".encoder", enc, rng);
    decoders_[idx(c)] = nn::Mlp(params_, name + ".decoder", dec, rng);
    for (int l = 0; l < config_.levels; ++l) {
      codebooks_[idx(c)].push_back(&params_.add(name + ".codebook" + std::to_string(l),
                                                nn::normal_init(config_.codebook_size, config_.latent_dim, code_sd, rng)));
    }
  }
  tau_ = &params_.add("tau", Matrix::Constant(1, 1, config_.tau_init));
}

std::vector<Matrix> RqVae::codebooks(Channel c) const {
  std::vector<Matrix> out;
  for (const auto* p : codebooks_[idx(c)]) out.push_back(p->value);
  return out;
}

Matrix RqVae::encode(Channel c, const Matrix& v) const {
  nn::Tape tape(false);
  return encoders_[idx(c)](tape, tape.constant(v)).value();
}

Quantization RqVae::quantize(Channel c, const Matrix& v) const {
  const auto books = codebooks(c);
  return residual_quantize(encode(c, v), books);
}

Matrix RqVae::decode(Channel c, const Matrix& zhat) const {
  nn::Tape tape(false);
  return decoders_[idx(c)](tape, tape.constant(zhat)).value();
}

ChannelSnapshot RqVae::snapshot(Channel c, const Matrix& z) const {
  ChannelSnapshot s;
  const auto books = codebooks(c);
  s.quantization = residual_quantize(z, books);
  Matrix running = Matrix::Zero(z.rows(), z.cols());
  for (std::size_t l = 0; l < books.size(); ++l) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      running.row(i) += books[l].row(s.quantization.codes[static_cast<std::size_t>(i)][l]);
    }
    s.partial_sums.push_back(running);
  }
  s.offset = s.quantization.quantized - z;
  return s;
}

RqVae::Losses RqVae::forward(nn::Tape& tape, const Matrix& vs, const Matrix& vr, const Snapshot* frozen,
                             Snapshot* taken) const {
  const double inv_b = 1.0 / static_cast<double>(vs.rows());
  Losses out;
  nn::Var recon, rq;
  nn::Var z[2];
  Snapshot local;
  for (Channel c : kChannels) {
    const auto ci = idx(c);
    const Matrix& v = c == Channel::kSearch ? vs : vr;
    z[ci] = encoders_[ci](tape, tape.constant(v));
    ChannelSnapshot& snap = c == Channel::kSearch ? local.search : local.rec;
    if (frozen) {
      snap = c == Channel::kSearch ? frozen->search : frozen->rec;
    } else {
      snap = snapshot(c, z[ci].value());
    }
    // Straight-through: the decoder sees z + sg(quantized - z).
    const auto zhat = nn::add(z[ci], tape.constant(snap.offset));
    const auto vhat = decoders_[ci](tape, zhat);
    const auto r = nn::sum_squares(nn::sub(tape.constant(v), vhat));
    recon = recon.valid() ? nn::add(recon, r) : r;
    for (int l = 0; l < config_.levels; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      std::vector<int> level_codes(snap.quantization.codes.size());
      for (std::size_t i = 0; i < level_codes.size(); ++i) level_codes[i] = snap.quantization.codes[i][lu];
      const auto picked = nn::sparse_matmul(nn::one_hot_rows(level_codes, config_.codebook_size),
                                            tape.leaf(*codebooks_[ci][lu]));
      // Codebook term: the incoming residual is fixed, codes move.
      const auto book_term = nn::sum_squares(nn::sub(tape.constant(snap.quantization.residuals[lu]), picked));
      // Commitment term: only the encoder moves.
      const auto commit_term = nn::sum_squares(nn::sub(z[ci], tape.constant(snap.partial_sums[lu])));
      const auto term = nn::add(book_term, commit_term);
      rq = rq.valid() ? nn::add(rq, term) : term;
    }
  }
  out.recon = nn::scale(recon, inv_b);
  out.rq = nn::scale(rq, inv_b);
  out.total = nn::add(out.recon, nn::scale(out.rq, config_.lambda_rq));
  if (config_.lambda_cl > 0) {
    out.cl = nn::symmetric_info_nce(z[0], z[1], tape.leaf(*tau_));
    out.total = nn::add(out.total, nn::scale(out.cl, config_.lambda_cl));
  }
  out.z_search = z[0].value();
  out.z_rec = z[1].value();
  if (taken) *taken = std::move(local);
  return out;
}

void RqVae::round_to_f32() {
  for (auto* p : params_.all()) util::round_to_f32(p->value);
}

TrainedQuantizer train_rqvae(const Matrix& vs, const Matrix& vr, const QuantizerConfig& config,
                             std::uint64_t seed, const std::function<void(int, const EpochLoss&)>& on_epoch) {
  if (vs.rows() != vr.rows() || vs.cols() != vr.cols() || vs.rows() == 0) {
    throw std::invalid_argument("train_rqvae: search and rec preference matrices must match and be non-empty");
  }
  if (!vs.allFinite() || !vr.allFinite()) throw std::invalid_argument("train_rqvae: non-finite preference vectors");
  util::Rng rng(seed);
  TrainedQuantizer result{RqVae(config, static_cast<int>(vs.cols()), rng), {}};
  RqVae& model = result.model;
  const auto& cfg = model.config();
  nn::Adam adam(model.params().all(), nn::AdamOptions{cfg.learning_rate});

  const auto n = static_cast<std::size_t>(vs.rows());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  long global_batch = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<long>> usage[2];
    for (auto& u : usage) u.assign(static_cast<std::size_t>(cfg.levels), std::vector<long>(static_cast<std::size_t>(cfg.codebook_size), 0));
    Snapshot last;
    EpochLoss sums;

    for (std::size_t start = 0; start < n; start += batch, ++global_batch) {
      const std::size_t end = std::min(n, start + batch);
      const Matrix bs = rows_of(vs, order, start, end);
      const Matrix br = rows_of(vr, order, start, end);

      if (epoch == 0 && start == 0) {
        // Codebook initialisation from the first batch's residuals.
        for (Channel c : kChannels) {
          Matrix residual = model.encode(c, c == Channel::kSearch ? bs : br);
          for (int l = 0; l < cfg.levels; ++l) {
            auto& book = model.codebook(c, l).value;
            if (cfg.kmeans_init && residual.rows() >= cfg.codebook_size) {
              book = kmeans(residual, cfg.codebook_size, rng);
            } else {
              book = nn::normal_init(cfg.codebook_size, cfg.latent_dim,
                                     1.0 / std::sqrt(static_cast<double>(cfg.latent_dim)), rng);
            }
            for (Eigen::Index i = 0; i < residual.rows(); ++i) {
              residual.row(i) -= book.row(nearest_code(book, residual.row(i)));
            }
          }
        }
      }

      nn::Tape tape;
      Snapshot taken;
      const auto losses = model.forward(tape, bs, br, nullptr, &taken);
      const double total = losses.total.value()(0, 0);
      if (!std::isfinite(total)) {
        throw TrainError("quantizer loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(global_batch));
      }
      adam.zero_grad();
      tape.backward(losses.total);
      adam.step();
      nn::clamp_temperature(model.temperature());

      const double w = static_cast<double>(end - start);
      sums.total += w * total;
      sums.recon += w * losses.recon.value()(0, 0);
      sums.rq += w * losses.rq.value()(0, 0);
      if (losses.cl.valid()) sums.cl += w * losses.cl.value()(0, 0);
      for (Channel c : kChannels) {
        const auto& snap = c == Channel::kSearch ? taken.search : taken.rec;
        for (const auto& row : snap.quantization.codes) {
          for (int l = 0; l < cfg.levels; ++l) {
            ++usage[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)][static_cast<std::size_t>(row[static_cast<std::size_t>(l)])];
          }
        }
      }
      last = std::move(taken);
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    EpochLoss mean{sums.total * inv_n, sums.recon * inv_n, sums.rq * inv_n, sums.cl * inv_n};
    result.trace.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);

    if (cfg.restart_dead_codes && epoch + 1 < cfg.epochs) {
      for (Channel c : kChannels) {
        const auto& snap = c == Channel::kSearch ? last.search : last.rec;
        for (int l = 0; l < cfg.levels; ++l) {
          const Matrix& pool = snap.quantization.residuals[static_cast<std::size_t>(l)];
          auto& book = model.codebook(c, l).value;
          for (int k = 0; k < cfg.codebook_size; ++k) {
            if (usage[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] == 0) {
              book.row(k) = pool.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool.rows()))));
            }
          }
        }
      }
    }
  }
  model.round_to_f32();
  return result;
}

void save_quantizer(const std::filesystem::path& path, const TrainedQuantizer& q) {
  util::Archive archive;
  archive.kind = "rqvae";
  archive.meta["config"] = q.model.config().to_json();
  archive.meta["input_dim"] = q.model.input_dim();
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : q.trace) trace.push_back({e.total, e.recon, e.rq, e.cl});
  archive.meta["trace"] = trace;
  for (const auto* p : q.model.params().all()) archive.tensors.push_back({p->name, p->value});
  util::write_archive(path, archive);
}

TrainedQuantizer load_quantizer(const std::filesystem::path& path) {
  const auto archive = util::read_archive(path);
  if (archive.kind != "rqvae") throw std::runtime_error(path.string() + " is not a quantizer checkpoint");
  util::Rng rng(0);
  TrainedQuantizer q{RqVae(QuantizerConfig::from_json(archive.meta.at("config")),
                           archive.meta.at("input_dim").get<int>(), rng),
                     {}};
  for (auto* p : q.model.params().all()) {
    const Matrix& v = archive.tensor(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint tensor " + p->name + " has the wrong shape");
    }
    p->value = v;
  }
  for (const auto& e : archive.meta.value("trace", nlohmann::json::array())) {
    q.trace.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()});
  }
  return q;
}

}  // namespace gserec::rq
