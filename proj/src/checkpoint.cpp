#include "flood/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace flood {

namespace {

constexpr char kMagic[9] = "FLOODCKP";
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), std::streamsize(s.size()));
}
void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  put_u64(os, std::uint64_t(m.rows()));
  put_u64(os, std::uint64_t(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(os, m(r, c));
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw DataError("truncated checkpoint");
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw DataError("truncated checkpoint");
  return v;
}
double get_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw DataError("truncated checkpoint");
  return v;
}
std::string get_str(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1ull << 30)) throw DataError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), std::streamsize(n)))
    throw DataError("truncated checkpoint");
  return s;
}
Eigen::MatrixXd get_matrix(std::istream& is) {
  const auto rows = Eigen::Index(get_u64(is)), cols = Eigen::Index(get_u64(is));
  if (rows < 0 || cols < 0 || rows * cols > (1ll << 28))
    throw DataError("corrupt checkpoint tensor shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_f64(is);
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     double train_seconds, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);

  const ModelConfig& cfg = model.config();
  put_str(os, architecture_name(cfg.architecture));
  put_u32(os, std::uint32_t(cfg.w));
  put_u32(os, std::uint32_t(cfg.k));
  put_u32(os, std::uint32_t(cfg.hidden_dim));
  put_u32(os, std::uint32_t(cfg.n_heads));
  put_u32(os, std::uint32_t(cfg.n_encoder_layers));
  put_u32(os, std::uint32_t(cfg.n_gcn_layers));
  put_u32(os, std::uint32_t(cfg.lstm_layers));
  put_f64(os, cfg.dropout);
  put_u32(os, cfg.use_future_covariates ? 1 : 0);

  const DatasetMeta& meta = model.meta();
  TopologySpec topo;
  for (const auto& n : meta.graph.nodes()) topo.nodes.push_back(n);
  for (const auto& [a, b] : meta.graph.edges())
    topo.edges.emplace_back(meta.graph.node(a).id, meta.graph.node(b).id);
  topo.targets = meta.graph.targets();
  put_str(os, format_topology(topo));

  put_u64(os, meta.channels.size());
  for (const auto& ch : meta.channels) {
    put_str(os, ch.name);
    put_str(os, ch.node_id);
    put_str(os, channel_kind_name(ch.kind));
  }

  put_matrix(os, meta.scaler.mean);
  put_matrix(os, meta.scaler.std);

  put_f64(os, train_seconds);
  put_u64(os, seed);

  put_u64(os, model.params().size());
  for (const auto& [name, p] : model.params().entries()) {
    put_str(os, name);
    put_matrix(os, p.val());
  }
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != std::string(kMagic, 8))
    throw DataError("not a checkpoint file: " + path);
  if (get_u32(is) != kVersion)
    throw DataError("unsupported checkpoint version in " + path);

  ModelConfig cfg;
  cfg.architecture = parse_architecture(get_str(is));
  cfg.w = int(get_u32(is));
  cfg.k = int(get_u32(is));
  cfg.hidden_dim = int(get_u32(is));
  cfg.n_heads = int(get_u32(is));
  cfg.n_encoder_layers = int(get_u32(is));
  cfg.n_gcn_layers = int(get_u32(is));
  cfg.lstm_layers = int(get_u32(is));
  cfg.dropout = get_f64(is);
  cfg.use_future_covariates = get_u32(is) != 0;

  StationGraph graph = build_graph(parse_topology(get_str(is)));

  TimeSeriesFrame frame;  // channel metadata only; no observations needed
  const std::uint64_t n_ch = get_u64(is);
  for (std::uint64_t i = 0; i < n_ch; ++i) {
    ChannelSpec ch;
    ch.name = get_str(is);
    ch.node_id = get_str(is);
    ch.kind = parse_channel_kind(get_str(is));
    frame.channels.push_back(ch);
  }
  frame.values.resize(0, Eigen::Index(n_ch));
  frame.mask.resize(0, Eigen::Index(n_ch));

  Scaler scaler;
  scaler.mean = get_matrix(is);
  scaler.std = get_matrix(is);
  scaler.layout = make_layout(frame, graph);
  if (scaler.mean.rows() != scaler.layout.F || scaler.std.rows() != scaler.layout.F)
    throw DataError("checkpoint scaler statistics do not match the channel count");

  LoadedModel out;
  out.train_seconds = get_f64(is);
  out.seed = get_u64(is);

  DatasetMeta meta = DatasetMeta::build(graph, frame, scaler);
  out.model = Model::create(cfg, meta, out.seed);

  const std::uint64_t n_params = get_u64(is);
  if (n_params != out.model->params().size())
    throw DataError("checkpoint carries " + std::to_string(n_params) +
                    " tensors but the " + architecture_name(cfg.architecture) +
                    " architecture expects " +
                    std::to_string(out.model->params().size()));
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = get_str(is);
    Eigen::MatrixXd value = get_matrix(is);
    if (!out.model->params().contains(name))
      throw DataError("checkpoint tensor " + name +
                      " has no place in the reconstructed model");
    const nn::Value& p = out.model->params().at(name);
    if (p.rows() != value.rows() || p.cols() != value.cols())
      throw DataError("checkpoint tensor " + name + " has shape " +
                      nn::shape_str(value) + " but the model expects " +
                      nn::shape_str(p.val()));
    const_cast<nn::Value&>(p).mutable_val() = std::move(value);
  }
  return out;
}

}  // namespace flood
