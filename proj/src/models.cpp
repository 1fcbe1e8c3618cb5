#include "flood/models.hpp"

#include <algorithm>
#include <cmath>

namespace flood {

using nn::Value;
using nn::ParamStore;
using nn::Linear;
using nn::LSTMCell;
using nn::GCNLayer;
using nn::MultiHeadAttention;
using nn::EncoderBlock;

Architecture parse_architecture(const std::string& s) {
  if (s == "gtn-parallel") return Architecture::GtnParallel;
  if (s == "gtn-series") return Architecture::GtnSeries;
  if (s == "rnn") return Architecture::Rnn;
  if (s == "cnn") return Architecture::Cnn;
  if (s == "tcn") return Architecture::Tcn;
  if (s == "gcn") return Architecture::Gcn;
  if (s == "transformer") return Architecture::Transformer;
  if (s == "persistence") return Architecture::Persistence;
  throw ConfigError("unknown architecture: " + s);
}

std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::GtnParallel: return "gtn-parallel";
    case Architecture::GtnSeries: return "gtn-series";
    case Architecture::Rnn: return "rnn";
    case Architecture::Cnn: return "cnn";
    case Architecture::Tcn: return "tcn";
    case Architecture::Gcn: return "gcn";
    case Architecture::Transformer: return "transformer";
    case Architecture::Persistence: return "persistence";
  }
  throw ConfigError("unknown architecture enum value");
}

const std::vector<Architecture>& all_architectures() {
  static const std::vector<Architecture> v{
      Architecture::GtnParallel, Architecture::GtnSeries, Architecture::Rnn,
      Architecture::Cnn,         Architecture::Tcn,       Architecture::Gcn,
      Architecture::Transformer, Architecture::Persistence};
  return v;
}

const std::vector<Architecture>& learned_architectures() {
  static const std::vector<Architecture> v{
      Architecture::GtnParallel, Architecture::GtnSeries, Architecture::Rnn,
      Architecture::Cnn,         Architecture::Tcn,       Architecture::Gcn,
      Architecture::Transformer};
  return v;
}

void ModelConfig::validate() const {
  if (w < 1 || k < 1)
    throw ConfigError("model config: w and k must be >= 1 (got w=" +
                      std::to_string(w) + ", k=" + std::to_string(k) + ")");
  if (hidden_dim < 1 || n_heads < 1)
    throw ConfigError("model config: hidden_dim and n_heads must be >= 1");
  if (hidden_dim % n_heads != 0)
    throw ConfigError("model config: hidden_dim " + std::to_string(hidden_dim) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (n_encoder_layers < 1 || n_gcn_layers < 1 || lstm_layers < 1)
    throw ConfigError("model config: layer counts must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("model config: dropout must be in [0, 1)");
}

int tcn_receptive_field(int layers) {
  return 1 + 2 * ((1 << layers) - 1);
}

int tcn_layers_for(int span) {
  int layers = 1;
  while (tcn_receptive_field(layers) < span) ++layers;
  return layers;
}

DatasetMeta DatasetMeta::build(const StationGraph& graph,
                               const TimeSeriesFrame& frame, const Scaler& scaler) {
  DatasetMeta meta;
  meta.graph = graph;
  meta.layout = make_layout(frame, graph);
  meta.scaler = scaler;
  meta.channels = frame.channels;
  meta.a_hat_full = normalized_adjacency(graph).values;

  meta.station_nodes = graph.station_indices();
  const int ns = int(meta.station_nodes.size());
  std::vector<int> node_to_station(graph.node_count(), -1);
  for (int r = 0; r < ns; ++r) node_to_station[meta.station_nodes[r]] = r;

  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(ns, ns);
  for (int i = 0; i < ns; ++i)
    for (int j = i + 1; j < ns; ++j)
      if (graph.has_edge(meta.station_nodes[i], meta.station_nodes[j]))
        a(i, j) = a(j, i) = 1.0;
  Eigen::VectorXd d_inv_sqrt = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  meta.a_hat_station = d_inv_sqrt.asDiagonal() * a * d_inv_sqrt.asDiagonal();

  for (const std::string& id : graph.targets()) {
    int row = node_to_station[graph.index_of(id)];
    meta.target_station_rows.push_back(row);
  }

  meta.node_channels.assign(size_t(graph.node_count()), {});
  for (int j = 0; j < int(frame.channels.size()); ++j) {
    int node = graph.index_of(frame.channels[j].node_id);
    if (node < 0)
      throw DataError("channel " + frame.channels[j].name +
                      " references node absent from the graph: " +
                      frame.channels[j].node_id);
    meta.node_channels[size_t(node)].push_back(j);
  }
  return meta;
}

Eigen::MatrixXd Model::extended_sequence(const WindowedSample& s) const {
  const int w = cfg_.w, k = cfg_.k;
  const int f = meta_.layout.F;
  Eigen::MatrixXd ext(w + k, f);
  ext.topRows(w) = s.x_past;
  for (int j = 0; j < f; ++j)
    ext.bottomRows(k).col(j).setConstant(s.x_past(w - 1, j));
  for (int c = 0; c < meta_.layout.C; ++c)
    ext.bottomRows(k).col(meta_.layout.cov_idx[size_t(c)]) = s.x_cov_future.col(c);
  return ext;
}

WindowedSample Model::masked(const WindowedSample& s) const {
  return cfg_.use_future_covariates ? s : mask_future_covariates(s, meta_.layout);
}

Value Model::assemble_targets(const Value& per_target, int b, int m) {
  std::vector<Value> blocks;
  blocks.reserve(size_t(b));
  for (int i = 0; i < b; ++i)
    blocks.push_back(nn::transpose(nn::slice_rows(per_target, i * m, m)));
  return nn::concat_rows(blocks);
}

Value Model::forward_norm(const WindowedSample& s) {
  Rng rng(0);  // eval mode: the rng is never consumed
  return forward_norm_batch({s}, /*training=*/false, rng);
}

Forecast Model::forecast(const WindowedSample& s, bool with_attention) {
  nn::NoGradGuard no_grad;
  Value y_norm = forward_norm(s);
  Forecast fc;
  fc.anchor = s.anchor;
  fc.y_hat = meta_.scaler.inverse_targets(y_norm.val());
  if (!fc.y_hat.allFinite())
    throw DivergenceError("non-finite forecast at anchor " +
                          format_hour_stamp(s.anchor) + " (" +
                          architecture_name(cfg_.architecture) + ")");
  if (with_attention) fc.attention = extract_attention(s);
  return fc;
}

AttentionTable Model::extract_attention(const WindowedSample&) {
  throw ConfigError(architecture_name(cfg_.architecture) +
                    ": attention extraction not supported");
}

namespace {

// Time-major view of a batch: entry t is the B x F matrix of hour t.
std::vector<Eigen::MatrixXd> time_major(const std::vector<Eigen::MatrixXd>& seqs) {
  const Eigen::Index t_len = seqs[0].rows(), f = seqs[0].cols();
  std::vector<Eigen::MatrixXd> out;
  out.resize(size_t(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Eigen::MatrixXd m(Eigen::Index(seqs.size()), f);
    for (size_t b = 0; b < seqs.size(); ++b) m.row(Eigen::Index(b)) = seqs[b].row(t);
    out[size_t(t)] = std::move(m);
  }
  return out;
}

// Stacks the batch's extended sequences into one (B*T) x F matrix.
Eigen::MatrixXd pack_rows(const std::vector<Eigen::MatrixXd>& seqs) {
  const Eigen::Index t_len = seqs[0].rows(), f = seqs[0].cols();
  Eigen::MatrixXd m(Eigen::Index(seqs.size()) * t_len, f);
  for (size_t b = 0; b < seqs.size(); ++b)
    m.middleRows(Eigen::Index(b) * t_len, t_len) = seqs[b];
  return m;
}

// LSTM stack runner over a time-major input; returns the top layer's final
// hidden state (rows x hidden).
Value run_lstm_stack(const std::vector<LSTMCell>& cells,
                     const std::vector<Value>& inputs, Eigen::Index rows,
                     Eigen::Index hidden) {
  std::vector<Value> h(cells.size()), c(cells.size());
  for (size_t l = 0; l < cells.size(); ++l) {
    h[l] = Value(Eigen::MatrixXd::Zero(rows, hidden));
    c[l] = Value(Eigen::MatrixXd::Zero(rows, hidden));
  }
  for (const Value& x_t : inputs) {
    Value layer_in = x_t;
    for (size_t l = 0; l < cells.size(); ++l) {
      auto [h2, c2] = cells[l].step(layer_in, h[l], c[l]);
      h[l] = h2;
      c[l] = c2;
      layer_in = h2;
    }
  }
  return h.back();
}

// Batched GCN layer on (B*N) x d rows sharing one N x N operator.
Value gcn_batched(const GCNLayer& layer, const Value& h, const Value& a_hat,
                  Eigen::Index n_blocks) {
  Value prop = nn::cols_to_blocks(
      nn::matmul(a_hat, nn::stack_blocks_to_cols(h, n_blocks)), n_blocks);
  return nn::relu(nn::matmul(prop, layer.W));
}

// Mean over each t_len-row block of a packed (B*t_len) x d matrix -> B x d.
Value pool_blocks(const Value& packed, Eigen::Index n_seqs, Eigen::Index t_len) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_seqs, n_seqs * t_len);
  for (Eigen::Index s = 0; s < n_seqs; ++s)
    p.block(s, s * t_len, 1, t_len).setConstant(1.0 / double(t_len));
  return nn::matmul(Value(std::move(p)), packed);
}

// Row-replication selector: out row b*n + i = in row i, for b in [0, copies).
Eigen::MatrixXd replicate_selector(Eigen::Index n, Eigen::Index copies) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(copies * n, n);
  for (Eigen::Index b = 0; b < copies; ++b)
    for (Eigen::Index i = 0; i < n; ++i) r(b * n + i, i) = 1.0;
  return r;
}

class PersistenceModel : public Model {
 public:
  PersistenceModel(const ModelConfig& cfg, const DatasetMeta& meta)
      : Model(cfg, meta) {}

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool,
                           Rng&) override {
    const int b = int(batch.size()), k = cfg_.k, m = meta_.layout.M;
    Eigen::MatrixXd y(b * k, m);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < m; ++j)
        y.block(i * k, j, k, 1)
            .setConstant(batch[size_t(i)].x_past(cfg_.w - 1,
                                                 meta_.layout.target_idx[size_t(j)]));
    return Value(std::move(y));
  }
};

class RnnModel : public Model {
 public:
  RnnModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta) {
    for (int l = 0; l < cfg.lstm_layers; ++l)
      cells_.emplace_back(params_, "lstm" + std::to_string(l),
                          l == 0 ? meta.layout.F : cfg.hidden_dim, cfg.hidden_dim,
                          rng);
    head_ = Linear(params_, "head", cfg.hidden_dim, cfg.k * meta.layout.M, rng);
  }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool,
                           Rng&) override {
    std::vector<Eigen::MatrixXd> seqs;
    for (const auto& s : batch) seqs.push_back(extended_sequence(masked(s)));
    std::vector<Value> xs;
    for (auto& m : time_major(seqs)) xs.emplace_back(std::move(m));
    Value h = run_lstm_stack(cells_, xs, Eigen::Index(batch.size()), cfg_.hidden_dim);
    return nn::reshape_rows(head_.forward(h),
                            Eigen::Index(batch.size()) * cfg_.k, meta_.layout.M);
  }

 private:
  std::vector<LSTMCell> cells_;
  Linear head_;
};

struct ConvKernel3 {
  Value w0, w1, w2, b;
  ConvKernel3() = default;
  ConvKernel3(ParamStore& ps, const std::string& prefix, Eigen::Index dim, Rng& rng)
      : w0(ps.add(prefix + ".w0", nn::glorot_uniform(dim, dim, rng))),
        w1(ps.add(prefix + ".w1", nn::glorot_uniform(dim, dim, rng))),
        w2(ps.add(prefix + ".w2", nn::glorot_uniform(dim, dim, rng))),
        b(ps.add(prefix + ".b", Eigen::MatrixXd::Zero(1, dim))) {}
  Value apply(const Value& a, const Value& c, const Value& d) const {
    return nn::add(
        nn::add(nn::add(nn::matmul(a, w0), nn::matmul(c, w1)), nn::matmul(d, w2)),
        b);
  }
};

class CnnModel : public Model {
 public:
  static constexpr int kConvLayers = 3;

  CnnModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta) {
    embed_ = Linear(params_, "embed", meta.layout.F, cfg.hidden_dim, rng);
    for (int l = 0; l < kConvLayers; ++l)
      convs_.emplace_back(params_, "conv" + std::to_string(l), cfg.hidden_dim, rng);
    head_ = Linear(params_, "head", cfg.hidden_dim, cfg.k * meta.layout.M, rng);
  }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool,
                           Rng&) override {
    std::vector<Eigen::MatrixXd> seqs;
    for (const auto& s : batch) seqs.push_back(extended_sequence(masked(s)));
    std::vector<Value> h;
    for (auto& m : time_major(seqs)) h.push_back(embed_.forward(Value(std::move(m))));
    for (const auto& conv : convs_) {
      if (h.size() < 3) break;  // sequence too short for another valid conv
      std::vector<Value> next;
      for (size_t t = 0; t + 2 < h.size(); ++t)
        next.push_back(nn::relu(conv.apply(h[t], h[t + 1], h[t + 2])));
      // width-2 mean pool
      std::vector<Value> pooled;
      for (size_t t = 0; t + 1 < next.size(); t += 2)
        pooled.push_back(nn::scale(nn::add(next[t], next[t + 1]), 0.5));
      h = pooled.empty() ? next : pooled;
    }
    Value acc = h[0];
    for (size_t t = 1; t < h.size(); ++t) acc = nn::add(acc, h[t]);
    Value mean = nn::scale(acc, 1.0 / double(h.size()));
    return nn::reshape_rows(head_.forward(mean),
                            Eigen::Index(batch.size()) * cfg_.k, meta_.layout.M);
  }

 private:
  Linear embed_, head_;
  std::vector<ConvKernel3> convs_;
};

class TcnModel : public Model {
 public:
  TcnModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta), n_layers_(tcn_layers_for(cfg.w + cfg.k)) {
    embed_ = Linear(params_, "embed", meta.layout.F, cfg.hidden_dim, rng);
    for (int l = 0; l < n_layers_; ++l)
      convs_.emplace_back(params_, "tcn" + std::to_string(l), cfg.hidden_dim, rng);
    head_ = Linear(params_, "head", cfg.hidden_dim, cfg.k * meta.layout.M, rng);
  }

  int layers() const { return n_layers_; }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool,
                           Rng&) override {
    std::vector<Eigen::MatrixXd> seqs;
    for (const auto& s : batch) seqs.push_back(extended_sequence(masked(s)));
    std::vector<Value> h;
    for (auto& m : time_major(seqs)) h.push_back(embed_.forward(Value(std::move(m))));
    const Value zero(Eigen::MatrixXd::Zero(Eigen::Index(batch.size()),
                                           cfg_.hidden_dim));
    for (int l = 0; l < n_layers_; ++l) {
      const long d = 1L << l;
      std::vector<Value> next(h.size());
      for (long t = 0; t < long(h.size()); ++t) {
        const Value& x1 = t - d >= 0 ? h[size_t(t - d)] : zero;
        const Value& x2 = t - 2 * d >= 0 ? h[size_t(t - 2 * d)] : zero;
        // causal dilated conv with a residual connection
        next[size_t(t)] =
            nn::add(nn::relu(convs_[size_t(l)].apply(h[size_t(t)], x1, x2)),
                    h[size_t(t)]);
      }
      h = std::move(next);
    }
    return nn::reshape_rows(head_.forward(h.back()),
                            Eigen::Index(batch.size()) * cfg_.k, meta_.layout.M);
  }

 private:
  int n_layers_;
  Linear embed_, head_;
  std::vector<ConvKernel3> convs_;
};

class GcnModel : public Model {
 public:
  GcnModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta) {
    c_max_ = 1;
    for (const auto& ch : meta.node_channels)
      c_max_ = std::max(c_max_, int(ch.size()));
    embed_ = Linear(params_, "embed", Eigen::Index(c_max_) * (cfg.w + cfg.k),
                    cfg.hidden_dim, rng);
    for (int l = 0; l < cfg.n_gcn_layers; ++l)
      gcn_.emplace_back(params_, "gcn" + std::to_string(l), cfg.hidden_dim,
                        cfg.hidden_dim, rng);
    head_ = Linear(params_, "head", cfg.hidden_dim, cfg.k, rng);
  }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool,
                           Rng&) override {
    const int b = int(batch.size()), n = meta_.graph.node_count();
    const int t_len = cfg_.w + cfg_.k, m = meta_.layout.M;
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(b * n, c_max_ * t_len);
    for (int i = 0; i < b; ++i) {
      Eigen::MatrixXd ext = extended_sequence(masked(batch[size_t(i)]));
      for (int node = 0; node < n; ++node) {
        const auto& cols = meta_.node_channels[size_t(node)];
        for (int c = 0; c < int(cols.size()); ++c)
          feats.block(i * n + node, c * t_len, 1, t_len) =
              ext.col(cols[size_t(c)]).transpose();
      }
    }
    Value h = embed_.forward(Value(std::move(feats)));
    Value a_hat(meta_.a_hat_full);
    for (const auto& layer : gcn_) h = gcn_batched(layer, h, a_hat, b);
    std::vector<Eigen::Index> target_rows;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < m; ++j)
        target_rows.push_back(
            i * n + meta_.station_nodes[size_t(meta_.target_station_rows[size_t(j)])]);
    Value per_target = head_.forward(nn::gather_rows(h, target_rows));
    return assemble_targets(per_target, b, m);
  }

 private:
  int c_max_ = 1;
  Linear embed_, head_;
  std::vector<GCNLayer> gcn_;
};

class TransformerModel : public Model {
 public:
  TransformerModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta) {
    embed_ = Linear(params_, "embed", meta.layout.F, cfg.hidden_dim, rng);
    for (int l = 0; l < cfg.n_encoder_layers; ++l)
      blocks_.emplace_back(params_, "enc" + std::to_string(l), cfg.hidden_dim,
                           cfg.n_heads, 2 * cfg.hidden_dim, cfg.dropout, rng);
    head_ = Linear(params_, "head", cfg.hidden_dim, cfg.k * meta.layout.M, rng);
    pe_ = nn::positional_encoding(cfg.w + cfg.k, cfg.hidden_dim);
  }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool training,
                           Rng& rng) override {
    const Eigen::Index b = Eigen::Index(batch.size());
    const Eigen::Index t_len = cfg_.w + cfg_.k;
    std::vector<Eigen::MatrixXd> seqs;
    for (const auto& s : batch) seqs.push_back(extended_sequence(masked(s)));
    Value x = embed_.forward(Value(pack_rows(seqs)));
    x = nn::add(x, Value(pe_.replicate(b, 1)));
    for (const auto& blk : blocks_) x = blk.forward_packed(x, b, t_len, training, rng);
    Value pooled = pool_blocks(x, b, t_len);
    return nn::reshape_rows(head_.forward(pooled), b * cfg_.k, meta_.layout.M);
  }

 private:
  Linear embed_, head_;
  std::vector<EncoderBlock> blocks_;
  Eigen::MatrixXd pe_;
};

// Two-branch assembly. Branch A runs a GCN per past hour on station water
// levels, then a shared LSTM along the hours, yielding one state per station.
// Branch B embeds each covariate channel's full (w+k)-hour series as one
// token and runs a transformer encoder over the channel tokens. Cross-
// attention with target-station states as queries fuses the branches; its
// weights are the per-covariate attribution report. A linear head emits all
// k horizon steps per target at once.
class GtnParallelModel : public Model {
 public:
  GtnParallelModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta) {
    const int h = cfg.hidden_dim;
    for (int l = 0; l < cfg.n_gcn_layers; ++l)
      gcn_.emplace_back(params_, "gcn" + std::to_string(l), l == 0 ? 1 : h, h, rng);
    for (int l = 0; l < cfg.lstm_layers; ++l)
      cells_.emplace_back(params_, "lstm" + std::to_string(l), h, h, rng);
    token_proj_ = Linear(params_, "cov.proj", cfg.w + cfg.k, h, rng);
    chan_embed_ = params_.add("cov.embed",
                              nn::glorot_uniform(meta.layout.C, h, rng));
    for (int l = 0; l < cfg.n_encoder_layers; ++l)
      blocks_.emplace_back(params_, "enc" + std::to_string(l), h, cfg.n_heads,
                           2 * h, cfg.dropout, rng);
    fuse_ = MultiHeadAttention(params_, "fuse", h, cfg.n_heads, rng);
    head_ = Linear(params_, "head", h, cfg.k, rng);
  }

  void ablate_covariate_memory(bool on) override { ablate_memory_ = on; }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool training,
                           Rng& rng) override {
    const int b = int(batch.size());
    const int ns = int(meta_.station_nodes.size());
    const int m = meta_.layout.M, c = meta_.layout.C;
    const int t_len = cfg_.w + cfg_.k, h = cfg_.hidden_dim;

    std::vector<WindowedSample> ms;
    ms.reserve(size_t(b));
    for (const auto& s : batch) ms.push_back(masked(s));

    // Branch A: per-hour GCN over station levels, LSTM along the w hours.
    Value a_hat(meta_.a_hat_station);
    std::vector<Value> lstm_in;
    lstm_in.reserve(size_t(cfg_.w));
    for (int t = 0; t < cfg_.w; ++t) {
      Eigen::MatrixXd levels(b * ns, 1);
      for (int i = 0; i < b; ++i)
        for (int r = 0; r < ns; ++r) {
          int col = meta_.node_channels[size_t(meta_.station_nodes[size_t(r)])][0];
          levels(i * ns + r, 0) = ms[size_t(i)].x_past(t, col);
        }
      Value g(std::move(levels));
      for (const auto& layer : gcn_) g = gcn_batched(layer, g, a_hat, b);
      lstm_in.push_back(g);
    }
    Value states = run_lstm_stack(cells_, lstm_in, Eigen::Index(b) * ns, h);
    std::vector<Eigen::Index> q_rows;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < m; ++j)
        q_rows.push_back(i * ns + meta_.target_station_rows[size_t(j)]);
    Value queries = nn::gather_rows(states, q_rows);  // (B*M) x h

    // Branch B: one token per covariate channel over its full series.
    Eigen::MatrixXd series(b * c, t_len);
    for (int i = 0; i < b; ++i) {
      Eigen::MatrixXd ext = extended_sequence(ms[size_t(i)]);
      for (int j = 0; j < c; ++j)
        series.row(i * c + j) = ext.col(meta_.layout.cov_idx[size_t(j)]).transpose();
    }
    Value tokens = token_proj_.forward(Value(std::move(series)));
    tokens = nn::add(tokens, nn::matmul(Value(replicate_selector(c, b)), chan_embed_));
    for (const auto& blk : blocks_)
      tokens = blk.forward_packed(tokens, b, c, training, rng);
    Value memory = ablate_memory_ ? nn::scale(tokens, 0.0) : tokens;

    // Fusion: target states attend over covariate tokens.
    last_attention_.clear();
    std::vector<Value> fused;
    fused.reserve(size_t(b));
    for (int i = 0; i < b; ++i) {
      Value q = nn::slice_rows(queries, i * m, m);
      Value mem = nn::slice_rows(memory, i * c, c);
      auto out = fuse_.forward(q, mem, mem);
      Eigen::MatrixXd mean_w = Eigen::MatrixXd::Zero(m, c);
      for (const auto& w : out.weights) mean_w += w;
      last_attention_.push_back(mean_w / double(out.weights.size()));
      fused.push_back(nn::add(out.output, q));
    }
    Value per_target = head_.forward(nn::concat_rows(fused));  // (B*M) x k
    return assemble_targets(per_target, b, m);
  }

  AttentionTable extract_attention(const WindowedSample& s) override {
    forward_norm(s);
    const Eigen::MatrixXd& mean_w = last_attention_.at(0);  // M x C
    AttentionTable table;
    table.target_names = meta_.graph.targets();
    for (int j : meta_.layout.cov_idx)
      table.covariate_names.push_back(meta_.layout.channel_names[size_t(j)]);
    const int m = int(mean_w.rows()), c = int(mean_w.cols());
    // the direct multi-horizon head reads one fused vector per target, so
    // every horizon step shares that target's attention row
    table.weights.resize(m * cfg_.k, c);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < cfg_.k; ++j) table.weights.row(i * cfg_.k + j) = mean_w.row(i);
    return table;
  }

 private:
  std::vector<GCNLayer> gcn_;
  std::vector<LSTMCell> cells_;
  Linear token_proj_, head_;
  Value chan_embed_;
  std::vector<EncoderBlock> blocks_;
  MultiHeadAttention fuse_;
  bool ablate_memory_ = false;
  std::vector<Eigen::MatrixXd> last_attention_;  // per sample, M x C
};

// Stage 1 runs a shared transformer encoder over each node's own channel
// sequence. Stage 2 applies a GCN across nodes at every hour of those
// embeddings, an LSTM along the hours, and a per-target linear head.
class GtnSeriesModel : public Model {
 public:
  GtnSeriesModel(const ModelConfig& cfg, const DatasetMeta& meta, Rng& rng)
      : Model(cfg, meta) {
    const int h = cfg.hidden_dim;
    c_max_ = 1;
    for (const auto& ch : meta.node_channels)
      c_max_ = std::max(c_max_, int(ch.size()));
    embed_ = Linear(params_, "embed", c_max_, h, rng);
    for (int l = 0; l < cfg.n_encoder_layers; ++l)
      blocks_.emplace_back(params_, "enc" + std::to_string(l), h, cfg.n_heads,
                           2 * h, cfg.dropout, rng);
    for (int l = 0; l < cfg.n_gcn_layers; ++l)
      gcn_.emplace_back(params_, "gcn" + std::to_string(l), h, h, rng);
    for (int l = 0; l < cfg.lstm_layers; ++l)
      cells_.emplace_back(params_, "lstm" + std::to_string(l), h, h, rng);
    head_ = Linear(params_, "head", h, cfg.k, rng);
    pe_ = nn::positional_encoding(cfg.w + cfg.k, h);
  }

  Value forward_norm_batch(const std::vector<WindowedSample>& batch, bool training,
                           Rng& rng) override {
    const int b = int(batch.size()), n = meta_.graph.node_count();
    const int m = meta_.layout.M, t_len = cfg_.w + cfg_.k, h = cfg_.hidden_dim;

    // stage 1: (B*N) packed per-node sequences through the shared encoder
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(Eigen::Index(b) * n * t_len, c_max_);
    for (int i = 0; i < b; ++i) {
      Eigen::MatrixXd ext = extended_sequence(masked(batch[size_t(i)]));
      for (int node = 0; node < n; ++node) {
        const auto& cols = meta_.node_channels[size_t(node)];
        for (int c = 0; c < int(cols.size()); ++c)
          feats.block(Eigen::Index(i * n + node) * t_len, c, t_len, 1) =
              ext.col(cols[size_t(c)]);
      }
    }
    Value x = embed_.forward(Value(std::move(feats)));
    x = nn::add(x, Value(pe_.replicate(Eigen::Index(b) * n, 1)));
    for (const auto& blk : blocks_)
      x = blk.forward_packed(x, Eigen::Index(b) * n, t_len, training, rng);

    // stage 2: per hour, GCN across nodes; LSTM along hours
    Value a_hat(meta_.a_hat_full);
    std::vector<Value> lstm_in;
    lstm_in.reserve(size_t(t_len));
    for (int t = 0; t < t_len; ++t) {
      std::vector<Eigen::Index> rows;
      rows.reserve(size_t(b) * size_t(n));
      for (int i = 0; i < b; ++i)
        for (int node = 0; node < n; ++node)
          rows.push_back(Eigen::Index(i * n + node) * t_len + t);
      Value g = nn::gather_rows(x, rows);
      for (const auto& layer : gcn_) g = gcn_batched(layer, g, a_hat, b);
      lstm_in.push_back(g);
    }
    Value states = run_lstm_stack(cells_, lstm_in, Eigen::Index(b) * n, h);
    std::vector<Eigen::Index> target_rows;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < m; ++j)
        target_rows.push_back(
            i * n + meta_.station_nodes[size_t(meta_.target_station_rows[size_t(j)])]);
    Value per_target = head_.forward(nn::gather_rows(states, target_rows));
    return assemble_targets(per_target, b, m);
  }

 private:
  int c_max_ = 1;
  Linear embed_, head_;
  std::vector<EncoderBlock> blocks_;
  std::vector<GCNLayer> gcn_;
  std::vector<LSTMCell> cells_;
  Eigen::MatrixXd pe_;
};

}  // namespace

std::unique_ptr<Model> Model::create(const ModelConfig& cfg, const DatasetMeta& meta,
                                     std::uint64_t seed) {
  cfg.validate();
  if (meta.layout.M == 0)
    throw ConfigError("dataset has no target channels");
  Rng rng(seed);
  switch (cfg.architecture) {
    case Architecture::Persistence:
      return std::make_unique<PersistenceModel>(cfg, meta);
    case Architecture::Rnn:
      return std::make_unique<RnnModel>(cfg, meta, rng);
    case Architecture::Cnn:
      return std::make_unique<CnnModel>(cfg, meta, rng);
    case Architecture::Tcn:
      return std::make_unique<TcnModel>(cfg, meta, rng);
    case Architecture::Gcn:
      return std::make_unique<GcnModel>(cfg, meta, rng);
    case Architecture::Transformer:
      return std::make_unique<TransformerModel>(cfg, meta, rng);
    case Architecture::GtnParallel:
      return std::make_unique<GtnParallelModel>(cfg, meta, rng);
    case Architecture::GtnSeries:
      return std::make_unique<GtnSeriesModel>(cfg, meta, rng);
  }
  throw ConfigError("unknown architecture enum value");
}

}  // namespace flood
