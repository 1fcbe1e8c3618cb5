#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "flood/checkpoint.hpp"
#include "flood/synth.hpp"
#include "flood/train.hpp"

using namespace flood;

namespace {

struct Fixture {
  StationGraph graph;
  DatasetMeta meta;
  std::vector<WindowedSample> samples;

  Fixture() {
    graph = build_graph(default_topology());
    TimeSeriesFrame frame = generate(default_scenario(200, 7));
    auto windows = sliding_windows(frame, 12, 4, graph);
    auto layout = make_layout(frame, graph);
    auto [scaler, scaled] = fit_apply_scaler(windows, windows, layout);
    meta = DatasetMeta::build(graph, frame, scaler);
    samples = std::move(scaled);
  }

  ModelConfig config(Architecture a) const {
    ModelConfig cfg;
    cfg.architecture = a;
    cfg.w = 12;
    cfg.k = 4;
    cfg.hidden_dim = 8;
    cfg.n_heads = 2;
    return cfg;
  }
};

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p) : path(p) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint round trip reproduces forecasts bit for bit") {
  Fixture fx;
  for (Architecture a :
       {Architecture::GtnParallel, Architecture::GtnSeries, Architecture::Rnn}) {
    auto model = Model::create(fx.config(a), fx.meta, 42);
    TempFile tmp("ckpt_" + architecture_name(a) + ".bin");
    save_checkpoint(tmp.path, *model, 12.5, 42);
    LoadedModel loaded = load_checkpoint(tmp.path);
    CHECK(loaded.train_seconds == 12.5);
    CHECK(loaded.seed == 42);
    CHECK(loaded.model->config().architecture == a);
    Eigen::MatrixXd y1 = model->forecast(fx.samples[0]).y_hat;
    Eigen::MatrixXd y2 = loaded.model->forecast(fx.samples[0]).y_hat;
    CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("trained parameters survive the round trip") {
  Fixture fx;
  auto model = Model::create(fx.config(Architecture::Rnn), fx.meta, 5);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.seed = 5;
  train(*model, fx.samples, tc);
  TempFile tmp("ckpt_trained.bin");
  save_checkpoint(tmp.path, *model, 3.0, 5);
  LoadedModel loaded = load_checkpoint(tmp.path);
  for (const auto& [name, p] : model->params().entries()) {
    const auto& q = loaded.model->params().at(name);
    CHECK((p.val() - q.val()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("loading a non-checkpoint file fails cleanly") {
  TempFile tmp("ckpt_garbage.bin");
  std::ofstream(tmp.path) << "model,arm,mae_ft\n";
  CHECK_THROWS_AS(load_checkpoint(tmp.path), DataError);
  CHECK_THROWS_AS(load_checkpoint("no_such_file.bin"), DataError);
}

TEST_CASE("tensor mismatch against the declared config is rejected") {
  Fixture fx;
  auto model = Model::create(fx.config(Architecture::Rnn), fx.meta, 1);
  TempFile tmp("ckpt_mismatch.bin");
  save_checkpoint(tmp.path, *model, 0.0, 1);

  // truncate away the last tensor's tail: shape decode must fail loudly
  std::ifstream in(tmp.path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  TempFile cut("ckpt_cut.bin");
  std::ofstream(cut.path, std::ios::binary)
      << bytes.substr(0, bytes.size() - 64);
  CHECK_THROWS_AS(load_checkpoint(cut.path), DataError);
}
