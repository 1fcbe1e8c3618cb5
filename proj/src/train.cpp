#include "flood/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace flood {

using nn::Value;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Eigen::MatrixXd stack_targets(const std::vector<WindowedSample>& batch,
                              const std::vector<size_t>& idx) {
  const Eigen::Index k = batch[idx[0]].y_true.rows();
  const Eigen::Index m = batch[idx[0]].y_true.cols();
  Eigen::MatrixXd y(Eigen::Index(idx.size()) * k, m);
  for (size_t i = 0; i < idx.size(); ++i)
    y.middleRows(Eigen::Index(i) * k, k) = batch[idx[i]].y_true;
  return y;
}

std::vector<WindowedSample> select(const std::vector<WindowedSample>& all,
                                   const std::vector<size_t>& idx) {
  std::vector<WindowedSample> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(all[i]);
  return out;
}

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long t = 0;
};

void adam_step(nn::ParamStore& params, AdamState& st, const TrainConfig& cfg) {
  if (st.m.empty()) {
    for (const auto& [_, p] : params.entries()) {
      st.m.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      st.v.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));

  double sq_norm = 0.0;
  for (const auto& [_, p] : params.entries()) sq_norm += p.grad().squaredNorm();
  const double norm = std::sqrt(sq_norm);
  const double clip =
      (cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm)
          ? cfg.grad_clip_norm / norm
          : 1.0;

  size_t i = 0;
  for (const auto& [_, p] : params.entries()) {
    Eigen::MatrixXd g = p.grad() * clip;
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    Eigen::MatrixXd m_hat = st.m[i] / bc1;
    Eigen::MatrixXd denom = (st.v[i] / bc2).cwiseSqrt();
    denom.array() += cfg.epsilon;
    const_cast<Value&>(p).mutable_val() -=
        cfg.learning_rate * m_hat.cwiseQuotient(denom);
    ++i;
  }
}

std::string fmt(double x, const char* spec = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, x);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || patience < 1)
    throw ConfigError("train config: epochs, batch size, and patience must be >= 1");
  if (learning_rate <= 0.0 || epsilon <= 0.0 || grad_clip_norm <= 0.0)
    throw ConfigError("train config: learning rate, epsilon, and clip norm must be positive");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
    throw ConfigError("train config: beta1 and beta2 must lie in (0, 1)");
  if (val_fraction <= 0.0 || val_fraction >= 0.5)
    throw ConfigError("train config: validation fraction must lie in (0, 0.5)");
}

TrainResult train(Model& model, const std::vector<WindowedSample>& train_samples,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_samples.empty()) throw DataError("empty training set");

  const double t0 = now_seconds();
  const size_t n = train_samples.size();
  const size_t n_val = size_t(double(n) * cfg.val_fraction);
  const size_t n_fit = n - n_val;

  std::vector<size_t> fit_idx(n_fit);
  std::iota(fit_idx.begin(), fit_idx.end(), 0);
  std::vector<WindowedSample> val;
  for (size_t i = n_fit; i < n; ++i) val.push_back(train_samples[i]);

  Rng rng(cfg.seed);
  AdamState adam;
  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<Eigen::MatrixXd> best_params;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(fit_idx.begin(), fit_idx.end(), rng);
    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < n_fit; start += size_t(cfg.batch_size)) {
      const size_t stop = std::min(n_fit, start + size_t(cfg.batch_size));
      std::vector<size_t> idx(fit_idx.begin() + long(start),
                              fit_idx.begin() + long(stop));
      std::vector<WindowedSample> batch = select(train_samples, idx);
      Value pred = model.forward_norm_batch(batch, /*training=*/true, rng);
      Value loss = nn::mse(pred, Value(stack_targets(train_samples, idx)));
      const double l = loss.item();
      // normalized targets put a healthy MSE near 1; far past that the run
      // is unrecoverable even while still numerically finite
      constexpr double kDivergenceLoss = 1e9;
      if (!std::isfinite(l) || l > kDivergenceLoss)
        throw DivergenceError("divergence at epoch " + std::to_string(epoch) +
                              " (learning rate " + fmt(cfg.learning_rate, "%g") +
                              ")");
      model.params().zero_grads();
      loss.backward();
      adam_step(model.params(), adam, cfg);
      loss_sum += l * double(idx.size());
      seen += idx.size();
    }
    result.epoch_losses.push_back(loss_sum / double(seen));

    if (!val.empty()) {
      const double val_mae = evaluate(model, val).mae_ft;
      result.val_maes.push_back(val_mae);
      if (val_mae < best_val) {
        best_val = val_mae;
        result.best_epoch = epoch;
        since_best = 0;
        best_params.clear();
        for (const auto& [_, p] : model.params().entries())
          best_params.push_back(p.val());
      } else if (++since_best >= cfg.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }

  if (!best_params.empty()) {
    size_t i = 0;
    for (const auto& [_, p] : model.params().entries())
      const_cast<Value&>(p).mutable_val() = best_params[i++];
  }
  if (!model.params().all_finite())
    throw DivergenceError("non-finite parameters after training (learning rate " +
                          fmt(cfg.learning_rate, "%g") + ")");
  result.train_seconds = now_seconds() - t0;
  return result;
}

Metrics compute_metrics(const std::vector<Eigen::MatrixXd>& y_hat,
                        const std::vector<Eigen::MatrixXd>& y_true) {
  if (y_hat.empty() || y_hat.size() != y_true.size())
    throw DataError("metric inputs empty or mismatched");
  const Eigen::Index k = y_hat[0].rows(), m = y_hat[0].cols();
  Metrics out;
  out.mae_per_step = Eigen::VectorXd::Zero(k);
  out.rmse_per_step = Eigen::VectorXd::Zero(k);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (size_t i = 0; i < y_hat.size(); ++i) {
    if (y_hat[i].rows() != k || y_hat[i].cols() != m || y_true[i].rows() != k ||
        y_true[i].cols() != m)
      throw ShapeError("metric inputs disagree on k x M shape");
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index t = 0; t < m; ++t) {
        const double e = y_hat[i](j, t) - y_true[i](j, t);
        abs_sum += std::abs(e);
        sq_sum += e * e;
        out.mae_per_step(j) += std::abs(e);
        out.rmse_per_step(j) += e * e;
      }
  }
  const double per_step_n = double(y_hat.size()) * double(m);
  const double total_n = per_step_n * double(k);
  out.mae_ft = abs_sum / total_n;
  out.rmse_ft = std::sqrt(sq_sum / total_n);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.mae_per_step(j) /= per_step_n;
    out.rmse_per_step(j) = std::sqrt(out.rmse_per_step(j) / per_step_n);
  }
  return out;
}

Metrics evaluate(Model& model, const std::vector<WindowedSample>& test) {
  if (test.empty()) throw DataError("empty test set");
  const Scaler& scaler = model.meta().scaler;
  const int k = model.config().k;
  constexpr size_t kEvalBatch = 64;
  std::vector<Eigen::MatrixXd> y_hat, y_true;
  y_hat.reserve(test.size());
  y_true.reserve(test.size());
  Rng rng(0);
  nn::NoGradGuard no_grad;  // inference only: keep the tape off
  for (size_t start = 0; start < test.size(); start += kEvalBatch) {
    const size_t stop = std::min(test.size(), start + kEvalBatch);
    std::vector<WindowedSample> batch(test.begin() + long(start),
                                      test.begin() + long(stop));
    Eigen::MatrixXd pred =
        model.forward_norm_batch(batch, /*training=*/false, rng).val();
    for (size_t i = 0; i < batch.size(); ++i) {
      y_hat.push_back(
          scaler.inverse_targets(pred.middleRows(Eigen::Index(i) * k, k)));
      y_true.push_back(scaler.inverse_targets(batch[i].y_true));
    }
  }
  return compute_metrics(y_hat, y_true);
}

const ReportRow& EvalReport::row(const std::string& model,
                                 const std::string& arm) const {
  for (const auto& r : rows)
    if (r.model == model && r.arm == arm) return r;
  throw DataError("report has no row for " + model + "/" + arm);
}

std::string EvalReport::to_table() const {
  std::vector<std::string> models;
  for (const auto& r : rows)
    if (std::find(models.begin(), models.end(), r.model) == models.end())
      models.push_back(r.model);
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %12s %12s %12s %12s\n", "model",
                "mae(w/)", "rmse(w/)", "mae(w/o)", "rmse(w/o)");
  os << line;
  for (const auto& m : models) {
    const ReportRow& with = row(m, "with-fpc");
    const ReportRow& without = row(m, "without-fpc");
    std::snprintf(line, sizeof(line), "%-14s %12.4f %12.4f %12.4f %12.4f\n",
                  m.c_str(), with.mae_ft, with.rmse_ft, without.mae_ft,
                  without.rmse_ft);
    os << line;
  }
  return os.str();
}

std::string EvalReport::to_csv() const {
  std::string s = "model,arm,mae_ft,rmse_ft,train_s,predict_s\n";
  for (const auto& r : rows)
    s += r.model + "," + r.arm + "," + fmt(r.mae_ft) + "," + fmt(r.rmse_ft) +
         "," + fmt(r.train_s, "%.3f") + "," + fmt(r.predict_s, "%.3f") + "\n";
  return s;
}

std::string EvalReport::metrics_csv() const {
  std::string s = "model,arm,mae_ft,rmse_ft\n";
  for (const auto& r : rows)
    s += r.model + "," + r.arm + "," + fmt(r.mae_ft) + "," + fmt(r.rmse_ft) + "\n";
  return s;
}

EvalReport run_ablation(const AblationConfig& cfg, const DatasetMeta& meta,
                        const std::vector<WindowedSample>& train_set,
                        const std::vector<WindowedSample>& test_set) {
  // median-of-3 full-test prediction timing around a scoring pass
  auto timed_eval = [&test_set](Model& model, Metrics& metrics) {
    std::vector<double> times;
    for (int rep = 0; rep < 3; ++rep) {
      const double t0 = now_seconds();
      metrics = evaluate(model, test_set);
      times.push_back(now_seconds() - t0);
    }
    std::sort(times.begin(), times.end());
    return times[1];
  };

  EvalReport report;
  for (Architecture arch : cfg.architectures) {
    if (arch == Architecture::Persistence) {
      ModelConfig mc = cfg.base_model;
      mc.architecture = arch;
      auto model = Model::create(mc, meta, cfg.train.seed);
      Metrics metrics;
      const double predict_s = timed_eval(*model, metrics);
      for (const char* arm : {"with-fpc", "without-fpc"})
        report.rows.push_back({architecture_name(arch), arm, metrics.mae_ft,
                               metrics.rmse_ft, 0.0, predict_s});
      continue;
    }
    for (bool with_fpc : {true, false}) {
      ModelConfig mc = cfg.base_model;
      mc.architecture = arch;
      mc.use_future_covariates = with_fpc;
      auto model = Model::create(mc, meta, cfg.train.seed);
      TrainResult tr = train(*model, train_set, cfg.train);
      Metrics metrics;
      const double predict_s = timed_eval(*model, metrics);
      report.rows.push_back({architecture_name(arch),
                             with_fpc ? "with-fpc" : "without-fpc", metrics.mae_ft,
                             metrics.rmse_ft, tr.train_seconds, predict_s});
    }
  }
  return report;
}

}  // namespace flood
