#include "stewart/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "binio.hpp"
#include "stewart/rng.hpp"

namespace stewart {

namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXi;
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Tanh-form GELU, written through a single vectorized exp. The input to
// the sigmoid is clamped at |x| = 8, where the activation has saturated
// to x resp. 0 far below double precision.
constexpr double kGeluC1 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC2 = 0.044715;

ArrayXXd gelu_sigmoid(const ArrayXXd& x) {
  const ArrayXXd xc = x.min(8.0).max(-8.0);
  const ArrayXXd e = (2.0 * kGeluC1 * (xc + kGeluC2 * xc.cube())).exp();
  return e / (e + 1.0);
}

MatrixXd gelu(const MatrixXd& x) {
  return (x.array() * gelu_sigmoid(x.array())).matrix();
}

MatrixXd gelu_grad(const MatrixXd& x) {
  const ArrayXXd xc = x.array().min(8.0).max(-8.0);
  const ArrayXXd s = gelu_sigmoid(x.array());
  const ArrayXXd du = 2.0 * kGeluC1 * (1.0 + 3.0 * kGeluC2 * xc.square());
  return (s + x.array() * s * (1.0 - s) * du).matrix();
}

MatrixXd dense_forward(const Dense& d, const MatrixXd& x) {
  MatrixXd y = x * d.w;
  y.rowwise() += d.b.row(0);
  return y;
}

// dX for y = x W + b, accumulating dW and db when grad is set.
MatrixXd dense_backward(const Dense& d, const MatrixXd& x,
                        const MatrixXd& dy, Dense* grad) {
  if (grad != nullptr) {
    grad->w.noalias() += x.transpose() * dy;
    grad->b.row(0) += dy.colwise().sum();
  }
  return dy * d.w.transpose();
}

struct MlpCache {
  std::vector<MatrixXd> pre;  // pre-activation of each layer
  std::vector<MatrixXd> in;   // input of each layer
};

// Stack of dense layers with GELU after each one (gelu_last controls the
// final layer).
MatrixXd mlp_forward(const std::vector<Dense>& layers, const MatrixXd& input,
                     bool gelu_last, MlpCache* cache) {
  MatrixXd x = input;
  if (cache != nullptr) {
    cache->pre.clear();
    cache->in.clear();
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache != nullptr) cache->in.push_back(x);
    MatrixXd pre = dense_forward(layers[l], x);
    if (cache != nullptr) cache->pre.push_back(pre);
    const bool activate = gelu_last || l + 1 < layers.size();
    x = activate ? gelu(pre) : std::move(pre);
  }
  return x;
}

MatrixXd mlp_backward(const std::vector<Dense>& layers, const MlpCache& cache,
                      MatrixXd dout, bool gelu_last,
                      std::vector<Dense>* grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const bool activate = gelu_last || l + 1 < layers.size();
    if (activate) dout.array() *= gelu_grad(cache.pre[l]).array();
    Dense* g = grads != nullptr ? &(*grads)[l] : nullptr;
    dout = dense_backward(layers[l], cache.in[l], dout, g);
  }
  return dout;
}

// ---------------------------------------------------------------------------
// Sample preparation. The distance matrix enters as gathered rows of the
// RBF expansion of its distinct values, so repeated entries (six leg
// lengths plus zero, in legs mode) are expanded and transformed once.
// ---------------------------------------------------------------------------

struct SampleInput {
  VectorXi idx;    // n^2 entries: unique-row index of e(u, v), row-major
  VectorXi idx_t;  // unique-row index of the transposed entry e(v, u)
  MatrixXd rbf;    // U x H_e expansion of the distinct distances
  std::vector<int> node_types;
};

SampleInput prepare_input(const MatrixXd& distances,
                          const std::vector<int>& node_types, int rbf_count,
                          double rbf_max) {
  const int n = static_cast<int>(distances.rows());
  SampleInput s;
  s.node_types = node_types;
  s.idx.resize(n * n);
  s.idx_t.resize(n * n);

  std::map<double, int> seen;
  std::vector<double> unique_values;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double value = distances(u, v);
      auto [it, inserted] =
          seen.emplace(value, static_cast<int>(unique_values.size()));
      if (inserted) unique_values.push_back(value);
      s.idx[u * n + v] = it->second;
    }
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      s.idx_t[u * n + v] = s.idx[v * n + u];
    }
  }
  s.rbf.resize(static_cast<int>(unique_values.size()), rbf_count);
  for (std::size_t i = 0; i < unique_values.size(); ++i) {
    s.rbf.row(static_cast<int>(i)) =
        rbf_expand(unique_values[i], rbf_count, rbf_max);
  }
  return s;
}

SampleInput prepare_input(const DistanceGraph& graph, const NetDims& dims,
                          double rbf_max) {
  std::vector<int> types(graph.node_types.begin(), graph.node_types.end());
  return prepare_input(MatrixXd(graph.distances), types, dims.rbf, rbf_max);
}

// ---------------------------------------------------------------------------
// DisGNet batched forward/backward. All samples of a batch share the node
// count and node types; per-sample entry points use a batch of one, and
// the trainer feeds generated graphs in the canonical type order.
// ---------------------------------------------------------------------------

struct RoundCache {
  MatrixXd in;                    // round input
  MatrixXd pre_left, left;        // channel-wise map A
  MatrixXd pre_right, right;      // channel-wise map B
  MatrixXd prod;                  // per-channel matrix product
  MatrixXd concat, pre_mix;       // combine path
};

struct ForwardCache {
  int n = 0;
  int batch = 0;
  MlpCache node_cache[2];
  MatrixXd fd[2];  // transformed type-embedding table, 12 x H
  std::vector<int> uoffset;
  MatrixXd rbf_stack;
  MlpCache edge_cache[2];
  MatrixXd fe[2];        // transformed expansions, Utot x H
  MatrixXd gathered[2];  // per-tuple edge features, B n^2 x H
  MatrixXd t_node;       // per-tuple node-path product, n^2 x H
  MatrixXd t_edge;       // gathered[0] .* gathered[1]
  MatrixXd x0;
  std::vector<RoundCache> rounds;
  MatrixXd pooled;  // B x H
  MlpCache head_cache;
  MatrixXd out;  // B x 12
};

// out[:, :, c] = left[:, :, c] * right[:, :, c] over the node index.
void channel_matmul(const MatrixXd& left, const MatrixXd& right, int n,
                    int batch, MatrixXd& out) {
  const int nn = n * n;
  out.resize(left.rows(), left.cols());
  for (int s = 0; s < batch; ++s) {
    for (int c = 0; c < left.cols(); ++c) {
      ConstRowMajorMap lc(left.col(c).data() + s * nn, n, n);
      ConstRowMajorMap rc(right.col(c).data() + s * nn, n, n);
      RowMajorMap oc(out.col(c).data() + s * nn, n, n);
      oc.noalias() = lc * rc;
    }
  }
}

MatrixXd message_round_forward(const NetParams::MpRound& mp,
                               const MatrixXd& x, int n, int batch,
                               RoundCache& rc) {
  rc.in = x;
  rc.pre_left = dense_forward(mp.left, x);
  rc.left = gelu(rc.pre_left);
  rc.pre_right = dense_forward(mp.right, x);
  rc.right = gelu(rc.pre_right);
  channel_matmul(rc.left, rc.right, n, batch, rc.prod);
  rc.concat.resize(x.rows(), 2 * x.cols());
  rc.concat << x, rc.prod;
  rc.pre_mix = dense_forward(mp.mix, rc.concat);
  return rc.in + gelu(rc.pre_mix);
}

MatrixXd message_round_backward(const NetParams::MpRound& mp,
                                const RoundCache& rc, const MatrixXd& dout,
                                int n, int batch,
                                NetParams::MpRound* grad) {
  const int h = static_cast<int>(rc.in.cols());
  MatrixXd d_pre_mix = dout.cwiseProduct(gelu_grad(rc.pre_mix));
  MatrixXd d_concat = dense_backward(mp.mix, rc.concat, d_pre_mix,
                                     grad != nullptr ? &grad->mix : nullptr);
  MatrixXd dx = dout + d_concat.leftCols(h);  // residual + combine input

  // Product rule over the channel-wise matrix product.
  MatrixXd d_left(rc.left.rows(), h);
  MatrixXd d_right(rc.right.rows(), h);
  const int nn = n * n;
  for (int s = 0; s < batch; ++s) {
    for (int c = 0; c < h; ++c) {
      ConstRowMajorMap lc(rc.left.col(c).data() + s * nn, n, n);
      ConstRowMajorMap rcm(rc.right.col(c).data() + s * nn, n, n);
      ConstRowMajorMap dp(d_concat.col(h + c).data() + s * nn, n, n);
      RowMajorMap dl(d_left.col(c).data() + s * nn, n, n);
      RowMajorMap dr(d_right.col(c).data() + s * nn, n, n);
      dl.noalias() = dp * rcm.transpose();
      dr.noalias() = lc.transpose() * dp;
    }
  }

  d_left.array() *= gelu_grad(rc.pre_left).array();
  dx += dense_backward(mp.left, rc.in, d_left,
                       grad != nullptr ? &grad->left : nullptr);
  d_right.array() *= gelu_grad(rc.pre_right).array();
  dx += dense_backward(mp.right, rc.in, d_right,
                       grad != nullptr ? &grad->right : nullptr);
  return dx;
}

void disgnet_forward(const NetParams& p,
                     const std::vector<const SampleInput*>& batch,
                     ForwardCache& fc) {
  const int b = static_cast<int>(batch.size());
  const int n = static_cast<int>(batch[0]->node_types.size());
  const int nn = n * n;
  const int h = p.dims.feature;
  fc.n = n;
  fc.batch = b;

  for (int i = 0; i < 2; ++i) {
    fc.fd[i] = mlp_forward(p.node_mlp[i], p.node_embedding, true,
                           &fc.node_cache[i]);
  }

  int total_unique = 0;
  fc.uoffset.assign(b, 0);
  for (int s = 0; s < b; ++s) {
    fc.uoffset[s] = total_unique;
    total_unique += static_cast<int>(batch[s]->rbf.rows());
  }
  fc.rbf_stack.resize(total_unique, p.dims.rbf);
  for (int s = 0; s < b; ++s) {
    fc.rbf_stack.middleRows(fc.uoffset[s], batch[s]->rbf.rows()) =
        batch[s]->rbf;
  }
  for (int i = 0; i < 2; ++i) {
    fc.fe[i] = mlp_forward(p.edge_mlp[i], fc.rbf_stack, true,
                           &fc.edge_cache[i]);
  }

  fc.t_node.resize(nn, h);
  const std::vector<int>& types = batch[0]->node_types;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      fc.t_node.row(u * n + v) =
          fc.fd[0].row(types[u]).cwiseProduct(fc.fd[1].row(types[v]));
    }
  }

  for (int i = 0; i < 2; ++i) fc.gathered[i].resize(b * nn, h);
  for (int s = 0; s < b; ++s) {
    const SampleInput& in = *batch[s];
    for (int t = 0; t < nn; ++t) {
      fc.gathered[0].row(s * nn + t) = fc.fe[0].row(fc.uoffset[s] + in.idx[t]);
      fc.gathered[1].row(s * nn + t) =
          fc.fe[1].row(fc.uoffset[s] + in.idx_t[t]);
    }
  }
  fc.t_edge = fc.gathered[0].cwiseProduct(fc.gathered[1]);

  fc.x0.resize(b * nn, h);
  for (int s = 0; s < b; ++s) {
    fc.x0.middleRows(s * nn, nn) =
        fc.t_edge.middleRows(s * nn, nn).cwiseProduct(fc.t_node);
  }

  MatrixXd x = fc.x0;
  fc.rounds.resize(p.mp.size());
  for (std::size_t r = 0; r < p.mp.size(); ++r) {
    x = message_round_forward(p.mp[r], x, n, b, fc.rounds[r]);
  }

  fc.pooled.resize(b, h);
  for (int s = 0; s < b; ++s) {
    fc.pooled.row(s) = x.middleRows(s * nn, nn).colwise().mean();
  }
  fc.out = mlp_forward(p.head, fc.pooled, false, &fc.head_cache);
}

void disgnet_backward(const NetParams& p,
                      const std::vector<const SampleInput*>& batch,
                      const ForwardCache& fc, const MatrixXd& dout,
                      NetParams& grad) {
  const int b = fc.batch;
  const int n = fc.n;
  const int nn = n * n;

  MatrixXd d_pooled =
      mlp_backward(p.head, fc.head_cache, dout, false, &grad.head);

  MatrixXd dx(b * nn, p.dims.feature);
  for (int s = 0; s < b; ++s) {
    dx.middleRows(s * nn, nn) =
        (d_pooled.row(s) / static_cast<double>(nn)).replicate(nn, 1);
  }

  for (std::size_t r = p.mp.size(); r-- > 0;) {
    dx = message_round_backward(p.mp[r], fc.rounds[r], dx, n, b, &grad.mp[r]);
  }

  // Hadamard split of x0 = t_node (broadcast over the batch) .* t_edge.
  MatrixXd d_t_edge(b * nn, p.dims.feature);
  MatrixXd d_t_node = MatrixXd::Zero(nn, p.dims.feature);
  for (int s = 0; s < b; ++s) {
    d_t_edge.middleRows(s * nn, nn) =
        dx.middleRows(s * nn, nn).cwiseProduct(fc.t_node);
    d_t_node +=
        dx.middleRows(s * nn, nn).cwiseProduct(fc.t_edge.middleRows(s * nn, nn));
  }
  MatrixXd d_g0 = d_t_edge.cwiseProduct(fc.gathered[1]);
  MatrixXd d_g1 = d_t_edge.cwiseProduct(fc.gathered[0]);

  MatrixXd d_fe[2];
  for (int i = 0; i < 2; ++i) {
    d_fe[i] = MatrixXd::Zero(fc.fe[i].rows(), fc.fe[i].cols());
  }
  for (int s = 0; s < b; ++s) {
    const SampleInput& in = *batch[s];
    for (int t = 0; t < nn; ++t) {
      d_fe[0].row(fc.uoffset[s] + in.idx[t]) += d_g0.row(s * nn + t);
      d_fe[1].row(fc.uoffset[s] + in.idx_t[t]) += d_g1.row(s * nn + t);
    }
  }
  for (int i = 0; i < 2; ++i) {
    mlp_backward(p.edge_mlp[i], fc.edge_cache[i], std::move(d_fe[i]), true,
                 &grad.edge_mlp[i]);
  }

  MatrixXd d_fd[2];
  for (int i = 0; i < 2; ++i) {
    d_fd[i] = MatrixXd::Zero(fc.fd[i].rows(), fc.fd[i].cols());
  }
  const std::vector<int>& types = batch[0]->node_types;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const auto dt = d_t_node.row(u * n + v);
      d_fd[0].row(types[u]) += dt.cwiseProduct(fc.fd[1].row(types[v]));
      d_fd[1].row(types[v]) += dt.cwiseProduct(fc.fd[0].row(types[u]));
    }
  }
  for (int i = 0; i < 2; ++i) {
    grad.node_embedding += mlp_backward(p.node_mlp[i], fc.node_cache[i],
                                        std::move(d_fd[i]), true,
                                        &grad.node_mlp[i]);
  }
}

// Loss gradient with respect to the 12 head outputs of one sample.
RowVectorXd pose_loss_grad(const RowVectorXd& out, const Pose& gt,
                           double beta, double* loss_value) {
  const Vec3 t(out[0], out[1], out[2]);
  Vec9 q;
  for (int k = 0; k < 9; ++k) q[k] = out[3 + k];
  const Mat3 m = NineDRotation(q).reshaped();

  const Vec3 dt_vec = t - gt.t;
  const Mat3 dm = m - gt.r.matrix();
  const double t_norm = dt_vec.norm();
  const double m_norm = dm.norm();
  if (loss_value != nullptr) *loss_value = t_norm + beta * m_norm;

  RowVectorXd g = RowVectorXd::Zero(12);
  if (t_norm > 0.0) {
    g.segment<3>(0) = (dt_vec / t_norm).transpose();
  }
  if (m_norm > 0.0) {
    const Mat3 dmn = beta / m_norm * dm;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) g[3 + r * 3 + c] = dmn(r, c);
    }
  }
  return g;
}

Prediction prediction_from_row(const RowVectorXd& out) {
  Prediction pred;
  pred.translation = Vec3(out[0], out[1], out[2]);
  Vec9 q;
  for (int k = 0; k < 9; ++k) q[k] = out[3 + k];
  pred.nine_d = NineDRotation(q);
  pred.pose.r = svd_orthogonalize(pred.nine_d, &pred.rank_deficient);
  pred.pose.t = pred.translation;
  return pred;
}

// --------------------------------------------------------------------------
// Plain MLP with batch normalization.
// --------------------------------------------------------------------------

struct PlainCache {
  std::vector<MatrixXd> in, pre;       // dense inputs / outputs
  std::vector<MatrixXd> xhat, bn_out;  // normalized / scaled activations
  std::vector<RowVectorXd> inv_std;
  MatrixXd out;
};

MatrixXd plain_forward(const NetParams& p, const MatrixXd& input,
                       bool training, NetParams* running_update,
                       PlainCache& c) {
  const std::size_t layers = p.mlp.size();
  c.in.assign(layers, MatrixXd());
  c.pre.assign(layers, MatrixXd());
  c.xhat.assign(p.bn.size(), MatrixXd());
  c.bn_out.assign(p.bn.size(), MatrixXd());
  c.inv_std.assign(p.bn.size(), RowVectorXd());

  MatrixXd x = input;
  for (std::size_t l = 0; l < layers; ++l) {
    c.in[l] = x;
    MatrixXd pre = dense_forward(p.mlp[l], x);
    c.pre[l] = pre;
    if (l + 1 == layers) {
      x = std::move(pre);  // linear output layer
      break;
    }
    const NetParams::BatchNorm& bn = p.bn[l];
    RowVectorXd mean, var;
    if (training) {
      mean = pre.colwise().mean();
      MatrixXd centered = pre.rowwise() - mean;
      var = centered.array().square().colwise().mean();
      if (running_update != nullptr) {
        NetParams::BatchNorm& rbn = running_update->bn[l];
        rbn.running_mean.row(0) =
            (1.0 - kBnMomentum) * rbn.running_mean.row(0) + kBnMomentum * mean;
        rbn.running_var.row(0) =
            (1.0 - kBnMomentum) * rbn.running_var.row(0) + kBnMomentum * var;
      }
    } else {
      mean = bn.running_mean.row(0);
      var = bn.running_var.row(0);
    }
    c.inv_std[l] = (var.array() + kBnEps).sqrt().inverse();
    c.xhat[l] =
        (pre.rowwise() - mean).array().rowwise() * c.inv_std[l].array();
    MatrixXd y = c.xhat[l].array().rowwise() * bn.gamma.row(0).array();
    y.rowwise() += bn.beta.row(0);
    c.bn_out[l] = y;
    x = gelu(y);
  }
  c.out = x;
  return x;
}

void plain_backward(const NetParams& p, const PlainCache& c, MatrixXd dout,
                    bool training, NetParams& grad) {
  const std::size_t layers = p.mlp.size();
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      dout.array() *= gelu_grad(c.bn_out[l]).array();
      const NetParams::BatchNorm& bn = p.bn[l];
      grad.bn[l].gamma.row(0) += dout.cwiseProduct(c.xhat[l]).colwise().sum();
      grad.bn[l].beta.row(0) += dout.colwise().sum();
      MatrixXd dxhat = dout.array().rowwise() * bn.gamma.row(0).array();
      if (training) {
        const RowVectorXd mean_dxhat = dxhat.colwise().mean();
        const RowVectorXd mean_dxhat_xhat =
            dxhat.cwiseProduct(c.xhat[l]).colwise().mean();
        MatrixXd inner = dxhat;
        inner.rowwise() -= mean_dxhat;
        inner -= c.xhat[l].array().rowwise() * mean_dxhat_xhat.array();
        dout = inner.array().rowwise() * c.inv_std[l].array();
      } else {
        dout = dxhat.array().rowwise() * c.inv_std[l].array();
      }
    }
    dout = dense_backward(p.mlp[l], c.in[l], dout, &grad.mlp[l]);
  }
}

MatrixXd plain_inputs_from(const std::vector<SampleRecord>& records,
                           const PlatformConfig& cfg) {
  MatrixXd in(static_cast<int>(records.size()), 6);
  for (std::size_t i = 0; i < records.size(); ++i) {
    in.row(static_cast<int>(i)) =
        (records[i].lbar - cfg.initial_leg_lengths).transpose();
  }
  return in;
}

MatrixXd plain_targets_from(const std::vector<SampleRecord>& records) {
  MatrixXd t(static_cast<int>(records.size()), 6);
  for (std::size_t i = 0; i < records.size(); ++i) {
    t.row(static_cast<int>(i)).head<3>() = records[i].x.transpose();
    t.row(static_cast<int>(i)).tail<3>() = records[i].q3d.transpose();
  }
  return t;
}

// --------------------------------------------------------------------------
// Adam
// --------------------------------------------------------------------------

struct Adam {
  int t = 0;
  std::vector<MatrixXd> m, v;

  void init(const std::vector<ParamRef>& params) {
    for (const ParamRef& p : params) {
      m.push_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
      v.push_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void step(const std::vector<ParamRef>& params,
            const std::vector<ParamRef>& grads, const TrainConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const MatrixXd& g = *grads[k].value;
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g;
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
      params[k].value->array() -= cfg.learning_rate * (m[k].array() / c1) /
                                  ((v[k].array() / c2).sqrt() + cfg.adam_eps);
    }
  }
};

void zero_params(const std::vector<ParamRef>& refs) {
  for (const ParamRef& r : refs) r.value->setZero();
}

}  // namespace

// --------------------------------------------------------------------------
// Parameters
// --------------------------------------------------------------------------

Eigen::RowVectorXd rbf_expand(double distance, int count, double rbf_max) {
  RowVectorXd out(count);
  const double spacing =
      count > 1 ? 1.0 / static_cast<double>(count - 1) : 1.0;
  const double u = distance / rbf_max;
  for (int k = 0; k < count; ++k) {
    const double z = (u - k * spacing) / spacing;
    out[k] = std::exp(-z * z);
  }
  return out;
}

NetParams NetParams::init(Arch arch, const NetDims& dims, double rbf_max,
                          std::uint64_t seed) {
  if (rbf_max <= 0.0) {
    throw std::invalid_argument("rbf_max must be positive");
  }
  NetParams p;
  p.arch = arch;
  p.dims = dims;
  p.rbf_max = rbf_max;

  auto make_dense = [](int in, int out) {
    Dense d;
    d.w.setZero(in, out);
    d.b.setZero(1, out);
    return d;
  };

  if (arch == Arch::kDisGNet) {
    p.node_embedding.setZero(12, dims.node_embed);
    for (int i = 0; i < 2; ++i) {
      p.node_mlp[i] = {make_dense(dims.node_embed, dims.feature),
                       make_dense(dims.feature, dims.feature),
                       make_dense(dims.feature, dims.feature)};
      p.edge_mlp[i] = {make_dense(dims.rbf, dims.feature),
                       make_dense(dims.feature, dims.feature),
                       make_dense(dims.feature, dims.feature)};
    }
    p.mp.resize(dims.rounds);
    for (auto& round : p.mp) {
      round.left = make_dense(dims.feature, dims.feature);
      round.right = make_dense(dims.feature, dims.feature);
      round.mix = make_dense(2 * dims.feature, dims.feature);
    }
    p.head = {make_dense(dims.feature, dims.feature),
              make_dense(dims.feature, 12)};
  } else {
    p.mlp = {make_dense(6, dims.feature),
             make_dense(dims.feature, dims.feature),
             make_dense(dims.feature, 6)};
    p.bn.resize(2);
    for (auto& bn : p.bn) {
      bn.gamma.setOnes(1, dims.feature);
      bn.beta.setZero(1, dims.feature);
      bn.running_mean.setZero(1, dims.feature);
      bn.running_var.setOnes(1, dims.feature);
    }
  }

  // Weights uniform in +-1/sqrt(fan_in), filled in enumeration order from
  // one Philox stream; biases and batch-norm stay at their constants.
  Philox rng(seed, 0);
  for (ParamRef& ref : param_refs(p)) {
    MatrixXd& w = *ref.value;
    const bool is_weight =
        ref.name.ends_with(".w") || ref.name == "node_embedding";
    if (!is_weight) continue;
    const double fan_in = ref.name == "node_embedding"
                              ? static_cast<double>(dims.node_embed)
                              : static_cast<double>(w.rows());
    const double scale = 1.0 / std::sqrt(fan_in);
    for (int c = 0; c < w.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) {
        w(r, c) = rng.next_uniform(-scale, scale);
      }
    }
  }
  return p;
}

NetParams zeros_like(const NetParams& p) {
  NetParams z = p;
  for (ParamRef& r : param_refs(z)) r.value->setZero();
  for (ParamRef& r : state_refs(z)) r.value->setZero();
  return z;
}

std::vector<ParamRef> param_refs(NetParams& p) {
  std::vector<ParamRef> refs;
  auto add = [&refs](const std::string& name, MatrixXd& value) {
    refs.push_back({name, &value});
  };
  auto add_dense = [&](const std::string& name, Dense& d) {
    add(name + ".w", d.w);
    add(name + ".b", d.b);
  };
  if (p.arch == Arch::kDisGNet) {
    add("node_embedding", p.node_embedding);
    for (int i = 0; i < 2; ++i) {
      for (std::size_t l = 0; l < p.node_mlp[i].size(); ++l) {
        add_dense("node_mlp." + std::to_string(i) + "." + std::to_string(l),
                  p.node_mlp[i][l]);
      }
    }
    for (int i = 0; i < 2; ++i) {
      for (std::size_t l = 0; l < p.edge_mlp[i].size(); ++l) {
        add_dense("edge_mlp." + std::to_string(i) + "." + std::to_string(l),
                  p.edge_mlp[i][l]);
      }
    }
    for (std::size_t r = 0; r < p.mp.size(); ++r) {
      add_dense("mp." + std::to_string(r) + ".left", p.mp[r].left);
      add_dense("mp." + std::to_string(r) + ".right", p.mp[r].right);
      add_dense("mp." + std::to_string(r) + ".mix", p.mp[r].mix);
    }
    for (std::size_t l = 0; l < p.head.size(); ++l) {
      add_dense("head." + std::to_string(l), p.head[l]);
    }
  } else {
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
      add_dense("mlp." + std::to_string(l), p.mlp[l]);
      if (l < p.bn.size()) {
        add("bn." + std::to_string(l) + ".gamma", p.bn[l].gamma);
        add("bn." + std::to_string(l) + ".beta", p.bn[l].beta);
      }
    }
  }
  return refs;
}

std::vector<ParamRef> state_refs(NetParams& p) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < p.bn.size(); ++l) {
    refs.push_back(
        {"bn." + std::to_string(l) + ".running_mean", &p.bn[l].running_mean});
    refs.push_back(
        {"bn." + std::to_string(l) + ".running_var", &p.bn[l].running_var});
  }
  return refs;
}

// --------------------------------------------------------------------------
// Spec-facing single-sample operations
// --------------------------------------------------------------------------

TupleFeatures init_features(const DistanceGraph& graph, const NetParams& p) {
  const SampleInput sample = prepare_input(graph, p.dims, p.rbf_max);

  MatrixXd fd[2], fe[2];
  for (int i = 0; i < 2; ++i) {
    fd[i] = mlp_forward(p.node_mlp[i], p.node_embedding, true, nullptr);
    fe[i] = mlp_forward(p.edge_mlp[i], sample.rbf, true, nullptr);
  }

  const int n = graph.node_count();
  TupleFeatures tf;
  tf.n = n;
  tf.round = 0;
  tf.h.resize(n * n, p.dims.feature);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const int t = u * n + v;
      tf.h.row(t) = fd[0]
                        .row(sample.node_types[u])
                        .cwiseProduct(fd[1].row(sample.node_types[v]))
                        .cwiseProduct(fe[0].row(sample.idx[t]))
                        .cwiseProduct(fe[1].row(sample.idx_t[t]));
    }
  }
  return tf;
}

TupleFeatures message_pass(const TupleFeatures& h, const NetParams& p) {
  if (h.round < 0 || h.round >= static_cast<int>(p.mp.size())) {
    throw std::invalid_argument("no message-passing round at this index");
  }
  RoundCache rc;
  TupleFeatures out;
  out.n = h.n;
  out.round = h.round + 1;
  out.h = message_round_forward(p.mp[h.round], h.h, h.n, 1, rc);
  return out;
}

Prediction predict(const DistanceGraph& graph, const NetParams& p) {
  const SampleInput sample = prepare_input(graph, p.dims, p.rbf_max);
  ForwardCache fc;
  disgnet_forward(p, {&sample}, fc);
  return prediction_from_row(fc.out.row(0));
}

Prediction predict_plain_mlp(const Vec6& los, const NetParams& p) {
  PlainCache cache;
  const MatrixXd out = plain_forward(p, los.transpose(), false, nullptr, cache);
  Prediction pred;
  pred.translation = Vec3(out(0, 0), out(0, 1), out(0, 2));
  pred.pose.r = euler_to_rotation(out(0, 3), out(0, 4), out(0, 5));
  pred.pose.t = pred.translation;
  pred.nine_d = NineDRotation::from_matrix(pred.pose.r.matrix());
  return pred;
}

Prediction predict_sample(const SampleRecord& rec, const PlatformConfig& cfg,
                          const NetParams& p) {
  if (p.arch == Arch::kPlainMlp) {
    return predict_plain_mlp(rec.lbar - cfg.initial_leg_lengths, p);
  }
  DistanceGraph graph;
  graph.distances = reshape_distance(rec.e);
  graph.adjacency = (graph.distances.array() != 0.0).cast<int>();
  for (int i = 0; i < 12; ++i) graph.node_types[i] = i;
  return predict(graph, p);
}

double loss(const Vec3& pred_t, const NineDRotation& pred_q, const Pose& gt,
            double beta) {
  if (beta <= 0.0) {
    throw std::invalid_argument("loss weight beta must be positive");
  }
  return (pred_t - gt.t).norm() +
         beta * (pred_q.reshaped() - gt.r.matrix()).norm();
}

NetParams backward(const DistanceGraph& graph, const NetParams& p,
                   const Pose& gt, double beta) {
  const SampleInput sample = prepare_input(graph, p.dims, p.rbf_max);
  ForwardCache fc;
  disgnet_forward(p, {&sample}, fc);

  NetParams grad = zeros_like(p);
  MatrixXd dout(1, 12);
  dout.row(0) = pose_loss_grad(fc.out.row(0), gt, beta, nullptr);
  disgnet_backward(p, {&sample}, fc, dout, grad);
  return grad;
}

double plain_mlp_loss(NetParams& p, const MatrixXd& inputs,
                      const MatrixXd& targets, bool training_mode,
                      bool update_running, NetParams* grad) {
  PlainCache cache;
  const MatrixXd out = plain_forward(
      p, inputs, training_mode, update_running ? &p : nullptr, cache);
  const MatrixXd diff = out - targets;
  const double denom = static_cast<double>(diff.size());
  const double mse = diff.array().square().sum() / denom;
  if (grad != nullptr) {
    plain_backward(p, cache, MatrixXd(2.0 / denom * diff), training_mode,
                   *grad);
  }
  return mse;
}

// --------------------------------------------------------------------------
// Training
// --------------------------------------------------------------------------

TrainResult train(const Dataset& dataset, const PlatformConfig& platform,
                  const TrainConfig& cfg, Arch arch, const NetDims& dims) {
  if (dataset.records.empty()) {
    throw std::invalid_argument("training dataset is empty");
  }
  if (cfg.learning_rate <= 0.0 || cfg.loss_beta <= 0.0) {
    throw std::invalid_argument(
        "learning_rate and loss_beta must be positive");
  }

  auto [train_set, val_set] = split(dataset, dataset.meta.split_ratio,
                                    cfg.seed);
  if (train_set.records.empty()) train_set = dataset;
  const std::vector<SampleRecord>& val_records =
      val_set.records.empty() ? train_set.records : val_set.records;

  const double rbf_max = 1.5 * platform.initial_leg_lengths.maxCoeff();
  TrainResult result;
  result.params = NetParams::init(arch, dims, rbf_max, cfg.seed);
  NetParams grad = zeros_like(result.params);

  const std::vector<ParamRef> prefs = param_refs(result.params);
  const std::vector<ParamRef> grefs = param_refs(grad);
  Adam adam;
  adam.init(prefs);

  // Distance expansions and targets are fixed across epochs.
  const std::vector<int> canonical_types = {0, 1, 2, 3, 4, 5,
                                            6, 7, 8, 9, 10, 11};
  auto prepare_all = [&](const std::vector<SampleRecord>& records) {
    std::vector<SampleInput> inputs;
    inputs.reserve(records.size());
    for (const SampleRecord& rec : records) {
      inputs.push_back(prepare_input(MatrixXd(reshape_distance(rec.e)),
                                     canonical_types, dims.rbf, rbf_max));
    }
    return inputs;
  };

  std::vector<SampleInput> train_inputs, val_inputs;
  std::vector<Pose> train_poses;
  MatrixXd plain_in, plain_tgt, plain_val_in;
  if (arch == Arch::kDisGNet) {
    train_inputs = prepare_all(train_set.records);
    val_inputs = prepare_all(val_records);
    train_poses.reserve(train_set.records.size());
    for (const SampleRecord& rec : train_set.records) {
      train_poses.push_back(rec.pose());
    }
  } else {
    plain_in = plain_inputs_from(train_set.records, platform);
    plain_tgt = plain_targets_from(train_set.records);
    plain_val_in = plain_inputs_from(val_records, platform);
  }

  const std::size_t n_train = train_set.records.size();
  const std::size_t batch_size =
      std::min<std::size_t>(std::max(cfg.batch_size, 1), n_train);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  const int eval_chunk = 256;
  ForwardCache fc;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Per-epoch shuffle from its own counter stream (seed, 1 + epoch).
    Philox shuffle_rng(cfg.seed, 1 + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n_train; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < n_train;
         start += batch_size, ++batch_index) {
      const std::size_t count = std::min(batch_size, n_train - start);
      double batch_loss = 0.0;
      zero_params(grefs);

      if (arch == Arch::kDisGNet) {
        std::vector<const SampleInput*> batch(count);
        for (std::size_t k = 0; k < count; ++k) {
          batch[k] = &train_inputs[order[start + k]];
        }
        disgnet_forward(result.params, batch, fc);
        MatrixXd dout(static_cast<int>(count), 12);
        for (std::size_t k = 0; k < count; ++k) {
          double sample_loss = 0.0;
          dout.row(static_cast<int>(k)) =
              pose_loss_grad(fc.out.row(static_cast<int>(k)),
                             train_poses[order[start + k]], cfg.loss_beta,
                             &sample_loss) /
              static_cast<double>(count);
          batch_loss += sample_loss;
        }
        batch_loss /= static_cast<double>(count);
        if (!std::isfinite(batch_loss)) {
          throw NonFiniteLossError(epoch, batch_index);
        }
        disgnet_backward(result.params, batch, fc, dout, grad);
      } else {
        MatrixXd in(static_cast<int>(count), 6);
        MatrixXd tgt(static_cast<int>(count), 6);
        for (std::size_t k = 0; k < count; ++k) {
          in.row(static_cast<int>(k)) =
              plain_in.row(static_cast<int>(order[start + k]));
          tgt.row(static_cast<int>(k)) =
              plain_tgt.row(static_cast<int>(order[start + k]));
        }
        batch_loss = plain_mlp_loss(result.params, in, tgt, true, true, &grad);
        if (!std::isfinite(batch_loss)) {
          throw NonFiniteLossError(epoch, batch_index);
        }
      }

      adam.step(prefs, grefs, cfg);
      epoch_loss += batch_loss * static_cast<double>(count);
    }

    EpochLog log_entry;
    log_entry.epoch = epoch;
    log_entry.mean_loss = epoch_loss / static_cast<double>(n_train);

    // Held-out metrics, evaluated in chunks.
    double sum_trans = 0.0, sum_rot = 0.0;
    if (arch == Arch::kDisGNet) {
      for (std::size_t start = 0; start < val_inputs.size();
           start += eval_chunk) {
        const std::size_t count =
            std::min<std::size_t>(eval_chunk, val_inputs.size() - start);
        std::vector<const SampleInput*> chunk(count);
        for (std::size_t k = 0; k < count; ++k) {
          chunk[k] = &val_inputs[start + k];
        }
        disgnet_forward(result.params, chunk, fc);
        for (std::size_t k = 0; k < count; ++k) {
          const SampleRecord& rec = val_records[start + k];
          const Prediction pred =
              prediction_from_row(fc.out.row(static_cast<int>(k)));
          sum_trans += (pred.translation - rec.x).norm();
          sum_rot +=
              geodesic_distance(pred.pose.r, quaternion_to_rotation(rec.q4d));
        }
      }
    } else {
      PlainCache cache;
      const MatrixXd out =
          plain_forward(result.params, plain_val_in, false, nullptr, cache);
      for (std::size_t k = 0; k < val_records.size(); ++k) {
        const SampleRecord& rec = val_records[k];
        const auto row = out.row(static_cast<int>(k));
        sum_trans += (Vec3(row[0], row[1], row[2]) - rec.x).norm();
        sum_rot += geodesic_distance(euler_to_rotation(row[3], row[4], row[5]),
                                     quaternion_to_rotation(rec.q4d));
      }
    }
    const double w = static_cast<double>(val_records.size());
    log_entry.val_e_trans = sum_trans / w;
    log_entry.val_e_rot = sum_rot / w;
    log_entry.val_e_rot_deg = geodesic_to_degrees(log_entry.val_e_rot);
    result.log.push_back(log_entry);
  }
  return result;
}

// --------------------------------------------------------------------------
// Checkpoints
// --------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[4] = {'G', 'S', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const NetParams& p, const std::string& path) {
  NetParams copy = p;
  std::vector<unsigned char> out;
  for (char c : kCheckpointMagic) out.push_back(static_cast<unsigned char>(c));
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u8(out, p.arch == Arch::kDisGNet ? 0 : 1);
  binio::put_u32(out, static_cast<std::uint32_t>(p.dims.feature));
  binio::put_u32(out, static_cast<std::uint32_t>(p.dims.node_embed));
  binio::put_u32(out, static_cast<std::uint32_t>(p.dims.rbf));
  binio::put_u32(out, static_cast<std::uint32_t>(p.dims.rounds));
  binio::put_f64(out, p.rbf_max);

  std::vector<ParamRef> refs = param_refs(copy);
  for (const ParamRef& s : state_refs(copy)) refs.push_back(s);
  binio::put_u64(out, refs.size());
  for (const ParamRef& ref : refs) {
    binio::put_u32(out, static_cast<std::uint32_t>(ref.value->rows()));
    binio::put_u32(out, static_cast<std::uint32_t>(ref.value->cols()));
    const double* data = ref.value->data();  // column-major
    for (Eigen::Index i = 0; i < ref.value->size(); ++i) {
      binio::put_f64(out, data[i]);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("short write to checkpoint: " + path);
}

NetParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  binio::Reader r(bytes.data(), bytes.size());

  auto need = [&](std::size_t n) {
    if (!r.can_read(n)) {
      throw std::runtime_error("checkpoint truncated at byte " +
                               std::to_string(r.offset()));
    }
  };
  need(8);
  for (char c : kCheckpointMagic) {
    if (r.u8() != static_cast<unsigned char>(c)) {
      throw std::runtime_error("not a checkpoint file (bad magic)");
    }
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  need(1 + 16 + 8 + 8);
  const std::uint8_t arch_byte = r.u8();
  if (arch_byte > 1) throw std::runtime_error("unknown architecture tag");
  NetDims dims;
  dims.feature = static_cast<int>(r.u32());
  dims.node_embed = static_cast<int>(r.u32());
  dims.rbf = static_cast<int>(r.u32());
  dims.rounds = static_cast<int>(r.u32());
  const double rbf_max = r.f64();

  NetParams p = NetParams::init(
      arch_byte == 0 ? Arch::kDisGNet : Arch::kPlainMlp, dims, rbf_max, 0);
  std::vector<ParamRef> refs = param_refs(p);
  for (const ParamRef& s : state_refs(p)) refs.push_back(s);

  const std::uint64_t stored = r.u64();
  if (stored != refs.size()) {
    throw std::runtime_error("checkpoint matrix count mismatch: expected " +
                             std::to_string(refs.size()) + ", found " +
                             std::to_string(stored));
  }
  for (ParamRef& ref : refs) {
    need(8);
    const auto rows = static_cast<Eigen::Index>(r.u32());
    const auto cols = static_cast<Eigen::Index>(r.u32());
    if (rows != ref.value->rows() || cols != ref.value->cols()) {
      throw std::runtime_error("checkpoint shape mismatch for " + ref.name);
    }
    need(static_cast<std::size_t>(rows * cols) * 8);
    double* data = ref.value->data();
    for (Eigen::Index i = 0; i < rows * cols; ++i) data[i] = r.f64();
  }
  return p;
}

void write_train_log(const std::vector<EpochLog>& log,
                     const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write training log: " + path);
  f << "epoch\tmean_loss\tval_e_trans_mm\tval_e_rot\tval_e_rot_deg\n";
  char buf[160];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\t%.17g\t%.17g\n", e.epoch,
                  e.mean_loss, e.val_e_trans, e.val_e_rot, e.val_e_rot_deg);
    f << buf;
  }
}

}  // namespace stewart
