#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stewart/datagen.hpp"
#include "stewart/platform.hpp"

namespace stewart {

/// Raised when a training batch produces a non-finite loss; carries the
/// epoch and batch indices of the offending step.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(int epoch, int batch)
      : std::runtime_error("non-finite training loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

enum class Arch { kDisGNet, kPlainMlp };

struct NetDims {
  int feature = 16;     // H: common feature width (96 at full scale)
  int node_embed = 8;   // H_d: node-type embedding width
  int rbf = 16;         // H_e: radial basis expansion width
  int rounds = 1;       // message-passing rounds
};

/// Dense layer y = x W + b with x as rows; W is in x out, b is 1 x out.
struct Dense {
  Eigen::MatrixXd w;
  Eigen::MatrixXd b;
};

/// All learnable state of either architecture, plus the non-learnable
/// batch-norm running statistics of the plain MLP. The same struct doubles
/// as the gradient buffer (see zeros_like), so parameter enumeration
/// lines up entry-for-entry between value and gradient.
struct NetParams {
  Arch arch = Arch::kDisGNet;
  NetDims dims;
  double rbf_max = 0.0;  // upper RBF center (mm), fixed from the geometry

  // DisGNet: tuple initialization, message passing, prediction head.
  Eigen::MatrixXd node_embedding;                 // 12 x H_d
  std::array<std::vector<Dense>, 2> node_mlp;     // f_d paths, 3 layers each
  std::array<std::vector<Dense>, 2> edge_mlp;     // f_e paths, 3 layers each
  struct MpRound {
    Dense left, right;  // channel-wise maps whose product carries messages
    Dense mix;          // 2H -> H combine, applied before the residual add
  };
  std::vector<MpRound> mp;
  std::vector<Dense> head;  // H -> H -> 12

  // Plain MLP baseline: dense/batch-norm/GELU twice, linear out.
  std::vector<Dense> mlp;  // 6 -> H -> H -> 6
  struct BatchNorm {
    Eigen::MatrixXd gamma, beta;                // learnable, 1 x H
    Eigen::MatrixXd running_mean, running_var;  // state, 1 x H
  };
  std::vector<BatchNorm> bn;

  /// Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases
  /// zero, batch-norm at identity. rbf_max should be 1.5x the longest
  /// assembly leg length of the platform the net will see.
  static NetParams init(Arch arch, const NetDims& dims, double rbf_max,
                        std::uint64_t seed);
};

NetParams zeros_like(const NetParams& p);

/// Named reference to one parameter matrix; enumeration order is the
/// checkpoint serialization order (docs/formats.md).
struct ParamRef {
  std::string name;
  Eigen::MatrixXd* value;
};
std::vector<ParamRef> param_refs(NetParams& p);  // learnable entries
std::vector<ParamRef> state_refs(NetParams& p);  // batch-norm running stats

/// Features of all N^2 node 2-tuples; row u*N+v holds the tuple (u, v).
struct TupleFeatures {
  int n = 12;
  int round = 0;
  Eigen::MatrixXd h;  // N^2 x H
};

/// Gaussian radial expansion of a distance: dims.rbf bases with centers
/// evenly spaced on [0, rbf_max] and width equal to the spacing. A zero
/// distance (non-edge) flows through the same expansion.
Eigen::RowVectorXd rbf_expand(double distance, int count, double rbf_max);

/// Tuple initialization: hadamard product of the two transformed
/// node-type embeddings and the two transformed edge expansions.
TupleFeatures init_features(const DistanceGraph& graph, const NetParams& p);

/// One 2-FWL message-passing round: per channel, the matrix product over
/// the shared node index aggregates the neighbor multiset, and a dense
/// combine with a residual connection mixes it into the tuple feature.
/// Uses p.mp[h.round].
TupleFeatures message_pass(const TupleFeatures& h, const NetParams& p);

struct Prediction {
  Pose pose;
  NineDRotation nine_d;       // raw rotation output, pre-projection
  Vec3 translation;           // equals pose.t
  bool rank_deficient = false;  // SVD projection diagnostic
};

/// Full DisGNet forward pass: init, rounds of message passing, mean-pool
/// over tuples, dense head, SVD-projected rotation.
Prediction predict(const DistanceGraph& graph, const NetParams& p);

/// Plain-MLP forward in evaluation mode (running batch-norm stats);
/// input is the displacement vector, output Euler angles become the pose.
Prediction predict_plain_mlp(const Vec6& los, const NetParams& p);

/// Record-level dispatch on the architecture; builds the graph or the
/// displacement input from the record.
Prediction predict_sample(const SampleRecord& rec, const PlatformConfig& cfg,
                          const NetParams& p);

/// Weighted pose loss |t - t_gt| + beta * |M(q) - R_gt|_F. The rotation
/// term reads the pre-projection matrix M(q); the SVD layer applies only
/// at inference.
double loss(const Vec3& pred_t, const NineDRotation& pred_q, const Pose& gt,
            double beta);

/// Exact gradient of loss(predict(graph)) with respect to every
/// learnable parameter, as a NetParams-shaped buffer.
NetParams backward(const DistanceGraph& graph, const NetParams& p,
                   const Pose& gt, double beta);

/// Mean MSE loss of the plain MLP over a batch (rows of `inputs` are
/// displacement vectors, rows of `targets` are x|euler), with optional
/// gradient accumulation. training_mode selects batch statistics for the
/// batch-norm layers; update_running folds them into the running stats.
double plain_mlp_loss(NetParams& p, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, bool training_mode,
                      bool update_running, NetParams* grad);

struct TrainConfig {
  double learning_rate = 1e-3;
  double loss_beta = 250.0;
  int batch_size = 4000;
  int epochs = 1200;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_e_trans = 0.0;    // mm
  double val_e_rot = 0.0;      // Frobenius-geodesic value
  double val_e_rot_deg = 0.0;  // degree view of the same
};

struct TrainResult {
  NetParams params;
  std::vector<EpochLog> log;
};

/// Adam training over shuffled mini-batches. The dataset is split into
/// train/validation with its own split_ratio and cfg.seed, so reruns
/// with identical inputs are bit-identical. Throws NonFiniteLossError if
/// a batch loss leaves the reals.
TrainResult train(const Dataset& dataset, const PlatformConfig& platform,
                  const TrainConfig& cfg, Arch arch, const NetDims& dims);

/// Versioned binary checkpoint (magic GSNN; layout in docs/formats.md).
/// Loading validates the header and every matrix shape.
void save_checkpoint(const NetParams& p, const std::string& path);
NetParams load_checkpoint(const std::string& path);

void write_train_log(const std::vector<EpochLog>& log,
                     const std::string& path);

}  // namespace stewart
