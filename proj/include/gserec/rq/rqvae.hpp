#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "gserec/nn/modules.hpp"
#include "gserec/nn/tape.hpp"
#include "gserec/rq/residual.hpp"
#include "gserec/util/rng.hpp"

namespace gserec::rq {

struct QuantizerConfig {
  int levels = 4;
  int codebook_size = 256;
  int latent_dim = 32;
  std::vector<int> hidden{256, 256};  ///< encoder widths; the decoder mirrors them
  double lambda_rq = 1.0;
  double lambda_cl = 1e-4;
  double tau_init = 0.1;
  int epochs = 500;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  bool kmeans_init = true;
  bool restart_dead_codes = true;

  void validate() const;
  nlohmann::json to_json() const;
  static QuantizerConfig from_json(const nlohmann::json& j);
};

enum class Channel { kSearch = 0, kRec = 1 };

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Quantities held fixed (stop-gradient) during one loss evaluation: the
/// chosen codes, the incoming residual at every level, the partial code sums
/// and the straight-through offset quantized - z.
struct ChannelSnapshot {
  Quantization quantization;
  std::vector<Matrix> partial_sums;  ///< partial_sums[l] = sum of codes 0..l
  Matrix offset;
};

struct Snapshot {
  ChannelSnapshot search;
  ChannelSnapshot rec;
};

/// Dual encoder/decoder with one codebook stack per channel.
class RqVae {
 public:
  RqVae(const QuantizerConfig& config, int input_dim, util::Rng& rng);
  RqVae(RqVae&&) = default;
  RqVae& operator=(RqVae&&) = default;

  const QuantizerConfig& config() const { return config_; }
  int input_dim() const { return input_dim_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  nn::Parameter& codebook(Channel c, int level) { return *codebooks_[idx(c)][static_cast<std::size_t>(level)]; }
  const nn::Parameter& codebook(Channel c, int level) const {
    return *codebooks_[idx(c)][static_cast<std::size_t>(level)];
  }
  std::vector<Matrix> codebooks(Channel c) const;
  nn::Parameter& temperature() { return *tau_; }

  /// Latents without recording gradients.
  Matrix encode(Channel c, const Matrix& v) const;
  Quantization quantize(Channel c, const Matrix& v) const;
  Matrix decode(Channel c, const Matrix& zhat) const;

  ChannelSnapshot snapshot(Channel c, const Matrix& z) const;

  struct Losses {
    nn::Var total, recon, rq, cl;  ///< cl invalid when lambda_cl == 0
    Matrix z_search, z_rec;
  };
  /// Records the full objective on `tape`. With `frozen` null the snapshot
  /// is taken from the current parameters, which is what training does.
  Losses forward(nn::Tape& tape, const Matrix& vs, const Matrix& vr, const Snapshot* frozen = nullptr,
                 Snapshot* taken = nullptr) const;

  void round_to_f32();

 private:
  static std::size_t idx(Channel c) { return static_cast<std::size_t>(c); }

  QuantizerConfig config_;
  int input_dim_;
  nn::ParameterSet params_;
  nn::Mlp encoders_[2];
  nn::Mlp decoders_[2];
  std::vector<nn::Parameter*> codebooks_[2];
  nn::Parameter* tau_ = nullptr;
};

struct EpochLoss {
  double total = 0, recon = 0, rq = 0, cl = 0;
};

struct TrainedQuantizer {
  RqVae model;
  std::vector<EpochLoss> trace;
};

/// Adam on L_Recon + lambda_rq L_RQ + lambda_cl L_RQ-CL with per-epoch
/// reshuffling, k-means codebook init on the first batch and dead-code
/// restarts between epochs. Parameters are rounded to f32 on return so the
/// in-memory model matches its checkpoint.
TrainedQuantizer train_rqvae(const Matrix& vs, const Matrix& vr, const QuantizerConfig& config,
                             std::uint64_t seed,
                             const std::function<void(int, const EpochLoss&)>& on_epoch = {});

void save_quantizer(const std::filesystem::path& path, const TrainedQuantizer& q);
TrainedQuantizer load_quantizer(const std::filesystem::path& path);

}  // namespace gserec::rq
