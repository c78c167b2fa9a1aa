#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/dataset/dataset.hpp"
#include "laneil/nn/model.hpp"
#include "laneil/nn/optim.hpp"

namespace laneil::train {

using data::Sample;
using SampleView = std::vector<const Sample*>;
using SourceMse = std::map<std::string, double>;

struct TrainSettings {
  std::size_t epochs = 50;
  std::size_t batch = 64;
  nn::AdamSettings adam;
  std::uint64_t seed = 0;
  nn::ModelConfig model = nn::default_model_config();
  bool track_train_mse = false;  // Eval-mode MSE on the training set before and after

  void validate() const {
    require(epochs >= 1, ErrorKind::Config, "train.epochs must be at least 1");
    require(batch >= 2, ErrorKind::Config, "train.batch must be at least 2 for batchnorm");
    require(adam.lr >= 0 && adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0,
            ErrorKind::Config, "bad optimizer settings");
  }
};

// Validation samples of one source, fixed for the whole run.
struct ValSubset {
  std::string source;
  SampleView samples;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;  // mean Train-mode minibatch loss
  SourceMse val_mse;      // Eval-mode, per source
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double initial_train_mse = std::numeric_limits<double>::quiet_NaN();
  double final_train_mse = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0;
};

struct TrainRun {
  std::uint64_t seed = 0;
  nn::Model<float> model;
  nn::AdamState<float> adam;
  TrainHistory history;

  const SourceMse& final_val() const {
    static const SourceMse empty;
    return history.epochs.empty() ? empty : history.epochs.back().val_mse;
  }
};

inline nn::Tensor<float> batch_inputs(const SampleView& samples, const std::vector<std::size_t>& order, std::size_t begin,
                                      std::size_t end) {
  nn::Tensor<float> x({end - begin, InputTensor::kChannels, InputTensor::kHeight, InputTensor::kWidth});
  for (std::size_t i = begin; i < end; ++i) {
    const auto& d = samples[order[i]]->input.data;
    std::copy(d.begin(), d.end(), x.data() + (i - begin) * InputTensor::kSize);
  }
  return x;
}

inline nn::Tensor<float> batch_targets(const SampleView& samples, const std::vector<std::size_t>& order,
                                       std::size_t begin, std::size_t end) {
  nn::Tensor<float> t({end - begin, 2});
  for (std::size_t i = begin; i < end; ++i) {
    t[(i - begin) * 2] = samples[order[i]]->action[0];
    t[(i - begin) * 2 + 1] = samples[order[i]]->action[1];
  }
  return t;
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Eval-mode MSE over both outputs of every sample.
inline double eval_mse(nn::Model<float>& model, const SampleView& samples, std::size_t batch = 256) {
  require(!samples.empty(), ErrorKind::InvalidArgument, "mse over an empty sample set");
  const auto order = identity_order(samples.size());
  double sum = 0;
  for (std::size_t b = 0; b < samples.size(); b += batch) {
    const std::size_t e = std::min(samples.size(), b + batch);
    const auto& y = model.forward(batch_inputs(samples, order, b, e), nn::RunMode::Eval);
    const auto t = batch_targets(samples, order, b, e);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = static_cast<double>(y[i]) - t[i];
      sum += d * d;
    }
  }
  return sum / (2.0 * static_cast<double>(samples.size()));
}

using EpochCallback = std::function<void(std::uint64_t seed, const EpochRecord&)>;

// Seeded shuffle each epoch, Train-mode minibatches with Adam, final batch
// dropped when it would hold a single sample, then Eval-mode MSE on each
// validation subset. Bit-deterministic given the settings.
inline TrainRun train_model(const SampleView& train, const std::vector<ValSubset>& val, const TrainSettings& s,
                            const EpochCallback& on_epoch = {}) {
  s.validate();
  require(!train.empty(), ErrorKind::InvalidArgument, "empty training set");
  for (const auto& v : val)
    require(!v.samples.empty(), ErrorKind::InvalidArgument, "empty validation subset for source " + v.source);
  const auto t0 = std::chrono::steady_clock::now();
  TrainRun run{s.seed, nn::Model<float>(s.model), {}, {}};
  run.model.init(derive_seed(s.seed, "init"));
  if (s.track_train_mse) run.history.initial_train_mse = eval_mse(run.model, train);

  std::uint64_t step = 0;
  nn::Tensor<float> grad;
  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    RandomStream rng(derive_seed(s.seed, "shuffle", epoch), "order");
    const auto order = permutation(train.size(), rng);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += s.batch) {
      const std::size_t e = std::min(order.size(), b + s.batch);
      if (e - b < 2) break;
      const auto x = batch_inputs(train, order, b, e);
      const auto t = batch_targets(train, order, b, e);
      run.model.zero_grad();
      const float loss = nn::mse_loss(run.model.forward(x, nn::RunMode::Train, derive_seed(s.seed, "dropout", step)), t, &grad);
      run.model.backward(grad);
      nn::adam_step(run.model.params(), run.adam, s.adam);
      loss_sum += static_cast<double>(loss) * static_cast<double>(e - b);
      seen += e - b;
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : std::numeric_limits<double>::quiet_NaN();
    for (const auto& v : val) rec.val_mse[v.source] = eval_mse(run.model, v.samples);
    run.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(s.seed, rec);
  }
  if (s.track_train_mse) run.history.final_train_mse = eval_mse(run.model, train);
  run.history.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.model.release_buffers();
  return run;
}

// Unweighted mean over sources.
inline double source_average(const SourceMse& m) {
  require(!m.empty(), ErrorKind::InvalidArgument, "no sources to average");
  double s = 0;
  for (const auto& [name, v] : m) s += v;
  return s / static_cast<double>(m.size());
}

// Index of the run with the lowest source-averaged MSE; ties go to the
// lowest index.
inline std::size_t select_best(const std::vector<SourceMse>& runs) {
  require(!runs.empty(), ErrorKind::InvalidArgument, "select_best needs at least one run");
  std::size_t best = 0;
  double best_avg = source_average(runs[0]);
  for (std::size_t i = 1; i < runs.size(); ++i) {
    require(runs[i].size() == runs[0].size() &&
                std::equal(runs[i].begin(), runs[i].end(), runs[0].begin(),
                           [](const auto& a, const auto& b) { return a.first == b.first; }),
            ErrorKind::InvalidArgument, "runs were validated on different sources");
    const double avg = source_average(runs[i]);
    if (avg < best_avg) {
      best_avg = avg;
      best = i;
    }
  }
  return best;
}

// Per-source arithmetic mean across runs.
inline SourceMse mean_across(const std::vector<SourceMse>& runs) {
  require(!runs.empty(), ErrorKind::InvalidArgument, "no runs to average");
  SourceMse out;
  for (const auto& r : runs)
    for (const auto& [name, v] : r) out[name] += v;
  for (auto& [name, v] : out) v /= static_cast<double>(runs.size());
  return out;
}

struct MultiSeedResult {
  std::vector<TrainRun> runs;
  SourceMse mean_val;
  std::size_t best = 0;
};

// Seeds base .. base + k - 1, optionally on several threads. Each run is
// independent, so the result does not depend on the thread count.
inline MultiSeedResult multi_seed(const SampleView& train, const std::vector<ValSubset>& val, const TrainSettings& s,
                                  std::size_t k, std::size_t jobs = 1, const EpochCallback& on_epoch = {}) {
  require(k >= 1, ErrorKind::Config, "need at least one seed");
  std::vector<std::optional<TrainRun>> slots(k);
  std::vector<std::exception_ptr> errors(k);
  auto work = [&](std::size_t i) {
    try {
      TrainSettings si = s;
      si.seed = s.seed + i;
      slots[i] = train_model(train, val, si, on_epoch);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, k));
  if (jobs == 1) {
    for (std::size_t i = 0; i < k; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < k; i += jobs) work(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  MultiSeedResult out;
  std::vector<SourceMse> finals;
  for (auto& slot : slots) {
    out.runs.push_back(std::move(*slot));
    finals.push_back(out.runs.back().final_val());
  }
  if (!val.empty()) {
    out.mean_val = mean_across(finals);
    out.best = select_best(finals);
  }
  return out;
}

}  // namespace laneil::train
