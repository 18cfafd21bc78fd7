#ifndef XTIME_TRAIN_HPP
#define XTIME_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "xtime/io.hpp"
#include "xtime/model.hpp"
#include "xtime/record.hpp"

namespace xtime {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double lr0 = 0.001;
  int cycle_epochs = 20;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 1;
  AdamConfig adam;

  void validate() const {
    if (!(lr0 > 0.0)) throw UsageError("train: lr0 must be positive");
    if (batch_size < 1) throw UsageError("train: batch size must be >= 1");
    if (cycle_epochs < 1) throw UsageError("train: cycle length must be >= 1");
    if (epochs < 0) throw UsageError("train: epochs must be >= 0");
  }
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update over every tensor in `params`, using the
/// gradients they currently hold.
inline void adam_step(std::span<const NamedTensor> params, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.m[k].size() != params[k].tensor.size()) {
      throw ShapeError("adam_step: state shape mismatch for " + params[k].name);
    }
    if (!params[k].tensor.has_grad()) continue;
    for (double g : params[k].tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in " + params[k].name);
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor w = params[k].tensor;
    if (!w.has_grad()) continue;
    auto g = w.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    auto theta = w.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Within each block of `cycle_epochs` epochs the rate follows a cosine from
/// the block peak down to peak/10; the peak halves every block.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw UsageError("lr_at: epoch must be >= 0");
  const int block = epoch / cfg.cycle_epochs;
  const int pos = epoch % cfg.cycle_epochs;
  const double peak = cfg.lr0 / std::pow(2.0, block);
  if (cfg.cycle_epochs == 1) return peak;
  const double floor = peak / 10.0;
  const double phase = static_cast<double>(pos) / static_cast<double>(cfg.cycle_epochs - 1);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

/// Tab-separated: epoch, split, loss, accuracy, lr. One header line.
inline std::string format_metrics_log(const std::vector<EpochMetrics>& log) {
  std::ostringstream os;
  os << "epoch\tsplit\tloss\taccuracy\tlr\n";
  for (const auto& m : log) {
    os << m.epoch << '\t' << m.split << '\t' << io::format_double(m.loss) << '\t' << io::format_double(m.accuracy)
       << '\t' << io::format_double(m.lr) << '\n';
  }
  return os.str();
}

/// Copies windows `idx` of `ds` into a [B, C, W] tensor.
inline Tensor make_batch(const WindowedDataset& ds, std::span<const std::size_t> idx, std::vector<int>* labels) {
  Tensor x({idx.size(), ds.channels, ds.window_samples});
  auto xd = x.data();
  const std::size_t stride = ds.window_stride();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    auto w = ds.window(idx[b]);
    std::copy(w.begin(), w.end(), xd.begin() + static_cast<std::ptrdiff_t>(b * stride));
    if (labels) labels->push_back(ds.labels[idx[b]]);
  }
  return x;
}

struct Batch {
  std::size_t dataset = 0;  // index into the list of same-length datasets
  std::vector<std::size_t> indices;
};

/// Epoch schedule: each dataset (one window length each) is shuffled and cut
/// into batches; batches are then drawn one at a time from a dataset chosen
/// uniformly among those with batches left. Every batch has a single length.
inline std::vector<Batch> plan_epoch(const std::vector<const WindowedDataset*>& sets, std::size_t batch_size,
                                     std::mt19937_64& rng) {
  std::vector<std::vector<Batch>> per_set(sets.size());
  for (std::size_t s = 0; s < sets.size(); ++s) {
    std::vector<std::size_t> order(sets[s]->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
      Batch b{s, {}};
      b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
      per_set[s].push_back(std::move(b));
    }
    std::reverse(per_set[s].begin(), per_set[s].end());
  }
  std::vector<Batch> plan;
  while (true) {
    std::vector<std::size_t> live;
    for (std::size_t s = 0; s < per_set.size(); ++s)
      if (!per_set[s].empty()) live.push_back(s);
    if (live.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
    const std::size_t s = live.size() == 1 ? live[0] : live[pick(rng)];
    plan.push_back(std::move(per_set[s].back()));
    per_set[s].pop_back();
  }
  return plan;
}

/// Lowest index wins ties.
inline std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t K = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < K; ++k)
    if (logits[row * K + k] > logits[row * K + best]) best = k;
  return best;
}

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<double> per_class_accuracy;            // NaN where a class has no support
  std::vector<std::vector<std::size_t>> confusion;   // [true][predicted]
  std::vector<int> predictions;
  std::size_t total = 0;
};

inline EvalResult evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                       std::size_t num_classes) {
  EvalResult r;
  r.total = truth.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])] += 1;
    if (truth[i] == predicted[i]) ++correct;
  }
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  r.per_class_accuracy.resize(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t support = 0;
    for (auto n : r.confusion[k]) support += n;
    r.per_class_accuracy[k] = support ? static_cast<double>(r.confusion[k][k]) / static_cast<double>(support)
                                      : std::numeric_limits<double>::quiet_NaN();
  }
  r.predictions.assign(predicted.begin(), predicted.end());
  return r;
}

/// Per-window accuracy in eval mode. The network's mode is restored afterwards
/// and no running statistic changes.
inline EvalResult evaluate(XTimeNetwork& net, const WindowedDataset& ds, std::size_t batch_size = 256) {
  if (ds.empty()) throw DataError("evaluate: empty dataset");
  if (ds.channels != net.spec().input_channels) {
    throw DataError("evaluate: dataset has " + std::to_string(ds.channels) + " channels, network expects " +
                    std::to_string(net.spec().input_channels));
  }
  if (ds.num_classes > net.spec().num_classes) {
    throw DataError("evaluate: dataset has more classes than the network");
  }
  const BnMode saved = net.mode();
  net.set_mode(BnMode::eval);
  std::vector<int> truth, predicted;
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    std::vector<int> labels;
    Tensor x = make_batch(ds, idx, &labels);
    Tensor logits = net.forward(x);
    loss_sum += cross_entropy(logits, labels).item() * static_cast<double>(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) predicted.push_back(static_cast<int>(argmax_row(logits, b)));
    truth.insert(truth.end(), labels.begin(), labels.end());
  }
  net.set_mode(saved);
  auto r = evaluate_predictions(truth, predicted, net.spec().num_classes);
  r.loss = loss_sum / static_cast<double>(ds.size());
  return r;
}

/// Accuracy after majority vote over each (subject, repetition, label)
/// gesture segment; ties go to the lowest class.
inline double majority_vote_accuracy(const WindowedDataset& ds, std::span<const int> predicted,
                                     std::size_t num_classes) {
  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> votes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& v = votes[{ds.subjects[i], ds.repetitions[i], ds.labels[i]}];
    if (v.empty()) v.assign(num_classes, 0);
    v[static_cast<std::size_t>(predicted[i])] += 1;
  }
  if (votes.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& [key, v] : votes) {
    const auto winner = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    if (winner == std::get<2>(key)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(votes.size());
}

struct TrainResult {
  std::vector<EpochMetrics> log;
  AdamState optimizer;
};

/// Called after each epoch with that epoch's training metrics; may append
/// further rows (for example held-out evaluation) to the log.
using EpochHook = std::function<void(int epoch, XTimeNetwork& net, std::vector<EpochMetrics>& log)>;

/// Mini-batch Adam training in BN train mode. `train_sets` holds one dataset
/// per window length; with several, each batch comes from one of them.
inline TrainResult train(XTimeNetwork& net, const std::vector<const WindowedDataset*>& train_sets,
                         const TrainConfig& cfg, const EpochHook& hook = {}) {
  cfg.validate();
  std::size_t total = 0;
  for (const auto* ds : train_sets) {
    if (ds->channels != net.spec().input_channels) {
      throw DataError("train: dataset has " + std::to_string(ds->channels) + " channels, network expects " +
                      std::to_string(net.spec().input_channels));
    }
    if (ds->num_classes > net.spec().num_classes) throw DataError("train: dataset has more classes than the network");
    total += ds->size();
  }
  if (total == 0) throw DataError("train: empty training set");

  std::vector<const WindowedDataset*> sets;
  for (const auto* ds : train_sets)
    if (!ds->empty()) sets.push_back(ds);

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  const auto params = net.parameters();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    net.set_mode(BnMode::train);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (const auto& batch : plan_epoch(sets, static_cast<std::size_t>(cfg.batch_size), rng)) {
      const WindowedDataset& ds = *sets[batch.dataset];
      std::vector<int> labels;
      Tensor x = make_batch(ds, batch.indices, &labels);
      if (x.dim(2) != ds.window_samples) throw std::logic_error("train: ragged batch");
      for (const auto& p : params) p.tensor.zero_grad();
      Tape tape;
      Tensor logits = net.forward(x, &tape);
      Tensor loss = cross_entropy(logits, labels, &tape);
      if (!std::isfinite(loss.item())) {
        throw NumericalError("train: loss became non-finite at epoch " + std::to_string(epoch));
      }
      backward(loss, tape);
      adam_step(params, result.optimizer, lr, cfg.adam);
      loss_sum += loss.item() * static_cast<double>(labels.size());
      for (std::size_t b = 0; b < labels.size(); ++b)
        if (static_cast<int>(argmax_row(logits, b)) == labels[b]) ++correct;
      seen += labels.size();
    }
    result.log.push_back({epoch, "train", loss_sum / static_cast<double>(seen),
                          static_cast<double>(correct) / static_cast<double>(seen), lr});
    if (hook) hook(epoch, net, result.log);
  }
  return result;
}

inline TrainResult train(XTimeNetwork& net, const WindowedDataset& train_ds, const TrainConfig& cfg,
                         const EpochHook& hook = {}) {
  return train(net, std::vector<const WindowedDataset*>{&train_ds}, cfg, hook);
}

/// Epoch hook that evaluates `ds` and logs it under `split`.
inline EpochHook evaluation_hook(const WindowedDataset& ds, std::string split = "test") {
  return [&ds, split](int epoch, XTimeNetwork& net, std::vector<EpochMetrics>& log) {
    auto r = evaluate(net, ds);
    log.push_back({epoch, split, r.loss, r.accuracy, log.back().lr});
  };
}

}  // namespace xtime

#endif  // XTIME_TRAIN_HPP
