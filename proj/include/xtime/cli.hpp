#ifndef XTIME_CLI_HPP
#define XTIME_CLI_HPP

// `xtime` command line: synth, preprocess, train, eval, count-params, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xtime/checkpoint.hpp"
#include "xtime/dataset.hpp"
#include "xtime/model.hpp"
#include "xtime/preprocess.hpp"
#include "xtime/train.hpp"
#include "xtime/verify.hpp"

namespace xtime::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct SynthArgs {
  SyntheticOptions opt;
  std::string out;
};

struct PreprocessArgs {
  std::vector<std::string> inputs;
  std::string out;
  PreprocessConfig cfg;
  std::string norm = "mu-law";
  std::size_t channels = 10;
};

struct TrainArgs {
  std::vector<std::string> data;
  std::string out;
  std::string metrics;
  std::string variant = "base";
  TrainConfig cfg;
  bool log_test = false;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  std::string split = "test";
};

struct CountArgs {
  std::string variant = "base";
  std::size_t classes = 52;
  std::size_t channels = 10;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t samples = 50;
};

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  os << text;
  if (!os) throw DataError("write failed for '" + path + "'");
}

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto record = generate_synthetic(a.opt);
  save_record(a.out, record);
  out << "wrote " << record.samples() << " samples (" << a.opt.num_classes << " classes x " << a.opt.repetitions
      << " repetitions, " << a.opt.channels << " channels) to " << a.out << '\n';
  return kOk;
}

inline int cmd_preprocess(PreprocessArgs a, std::ostream& out) {
  a.cfg.norm = parse_norm(a.norm);
  std::vector<SignalRecord> records;
  int subject = 1;
  for (const auto& path : a.inputs) {
    auto r = load_record(path, a.channels);
    r.subject_id = subject++;
    records.push_back(std::move(r));
  }
  const auto ds = preprocess(std::move(records), a.cfg);
  save_windows(a.out, ds);
  out << "wrote " << ds.size() << " windows of " << ds.window_samples << " samples (" << ds.window_ms << " ms, "
      << norm_name(ds.norm.kind) << ") to " << a.out << '\n';
  return kOk;
}

inline io::KeyValues provenance(const WindowedDataset& ds, const std::vector<int>& window_ms) {
  auto kv = window_header(ds);
  io::KeyValues meta;
  for (const char* key : {"norm", "mu", "prescale", "minmax_min", "minmax_max", "cutoff_hz", "two_pass", "fs",
                          "test_repetitions"}) {
    meta[std::string("prep.") + key] = kv[key];
  }
  meta["train.window_ms"] = io::join(window_ms);
  return meta;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.data.empty()) throw UsageError("train: --data is required");
  std::vector<WindowedDataset> train_sets, test_sets;
  std::size_t channels = 0, classes = 0;
  std::vector<int> lengths;
  for (const auto& path : a.data) {
    auto ds = load_windows(path);
    if (channels != 0 && ds.channels != channels) {
      throw DataError("train: '" + path + "' has " + std::to_string(ds.channels) + " channels, expected " +
                      std::to_string(channels));
    }
    channels = ds.channels;
    classes = std::max(classes, ds.num_classes);
    lengths.push_back(ds.window_ms);
    auto split = split_by_repetition(ds, SplitSpec::with_test({ds.test_repetitions.begin(), ds.test_repetitions.end()},
                                                              *std::max_element(ds.repetitions.begin(), ds.repetitions.end())));
    train_sets.push_back(std::move(split.first));
    test_sets.push_back(std::move(split.second));
  }
  XTimeNetworkSpec spec;
  spec.input_channels = channels;
  spec.num_classes = classes;
  spec.variant = parse_variant(a.variant);
  Rng rng(a.cfg.seed);
  XTimeNetwork net(spec, rng);

  std::vector<const WindowedDataset*> sets;
  for (const auto& d : train_sets) sets.push_back(&d);
  EpochHook hook;
  if (a.log_test) {
    hook = [&](int epoch, XTimeNetwork& n, std::vector<EpochMetrics>& log) {
      for (std::size_t i = 0; i < test_sets.size(); ++i) {
        if (test_sets[i].empty()) continue;
        auto r = evaluate(n, test_sets[i]);
        log.push_back({epoch, "test@" + std::to_string(test_sets[i].window_ms) + "ms", r.loss, r.accuracy,
                       log.back().lr});
      }
    };
  }
  const std::string metrics_path = a.metrics.empty() ? a.out + ".metrics.tsv" : a.metrics;
  TrainResult result;
  try {
    result = train(net, sets, a.cfg, hook);
  } catch (const NumericalError&) {
    throw;
  }
  write_text_file(metrics_path, format_metrics_log(result.log));
  save_checkpoint(a.out, net, provenance(train_sets.front(), lengths));
  const auto& last = result.log.empty() ? EpochMetrics{} : *std::find_if(result.log.rbegin(), result.log.rend(),
                                                                        [](const auto& m) { return m.split == "train"; });
  out << "trained " << variant_name(spec.variant) << " network (" << count_parameters(net) << " parameters) for "
      << a.cfg.epochs << " epochs; final train loss " << last.loss << ", accuracy " << last.accuracy << '\n'
      << "checkpoint: " << a.out << "\nmetrics: " << metrics_path << '\n';
  return kOk;
}

inline std::string format_eval_report(const EvalResult& r, double vote_accuracy) {
  std::ostringstream os;
  os << "# accuracy\t" << io::format_double(r.accuracy) << '\n';
  os << "# windows\t" << r.total << '\n';
  os << "# majority_vote_accuracy\t" << io::format_double(vote_accuracy) << '\n';
  os << "class\tsupport\taccuracy\n";
  for (std::size_t k = 0; k < r.confusion.size(); ++k) {
    std::size_t support = 0;
    for (auto n : r.confusion[k]) support += n;
    os << k << '\t' << support << '\t' << (support ? io::format_double(r.per_class_accuracy[k]) : "nan") << '\n';
  }
  os << "confusion (rows: true class, columns: predicted class)\n";
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "\t" : "") << row[j];
    os << '\n';
  }
  return os.str();
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto loaded = load_checkpoint(a.ckpt);
  auto& net = loaded.network;
  auto ds = load_windows(a.data);
  if (ds.channels != net.spec().input_channels) {
    throw DataError("eval: data has " + std::to_string(ds.channels) + " channels, checkpoint expects " +
                    std::to_string(net.spec().input_channels));
  }
  if (ds.num_classes > net.spec().num_classes) {
    throw DataError("eval: data has " + std::to_string(ds.num_classes) + " classes, checkpoint has " +
                    std::to_string(net.spec().num_classes));
  }
  auto it = loaded.metadata.find("prep.norm");
  if (it != loaded.metadata.end() && it->second != norm_name(ds.norm.kind)) {
    warn("eval: data normalized with " + std::string(norm_name(ds.norm.kind)) + ", checkpoint trained on " +
         it->second);
  }
  WindowedDataset subset;
  if (a.split == "all") {
    subset = ds;
  } else if (a.split == "test" || a.split == "train") {
    const int reps = ds.repetitions.empty() ? 1 : *std::max_element(ds.repetitions.begin(), ds.repetitions.end());
    auto split = split_by_repetition(ds, SplitSpec::with_test({ds.test_repetitions.begin(), ds.test_repetitions.end()},
                                                              std::max(reps, 1)));
    subset = a.split == "test" ? std::move(split.second) : std::move(split.first);
  } else {
    throw UsageError("eval: --split must be test, train or all");
  }
  if (subset.empty()) throw DataError("eval: no windows in the " + a.split + " split");
  const auto r = evaluate(net, subset);
  const double vote = majority_vote_accuracy(subset, r.predictions, net.spec().num_classes);
  out << "accuracy: " << io::format_double(r.accuracy) << " (" << r.total << " windows, " << subset.window_ms
      << " ms, split " << a.split << ")\n";
  out << "majority-vote accuracy: " << io::format_double(vote) << '\n';
  if (!a.report.empty()) write_text_file(a.report, format_eval_report(r, vote));
  return kOk;
}

inline int cmd_count_params(const CountArgs& a, std::ostream& out) {
  XTimeNetworkSpec spec;
  spec.variant = parse_variant(a.variant);
  spec.num_classes = a.classes;
  spec.input_channels = a.channels;
  XTimeNetwork net(spec, Rng(0));
  out << "layer\tparameters\n";
  for (const auto& [name, n] : parameter_breakdown(net)) out << name << '\t' << n << '\n';
  out << "total\t" << count_parameters(net) << '\n';
  return kOk;
}

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradCheckOptions opt;
  opt.seed = a.seed;
  opt.network_samples = a.samples;
  auto cases = layer_gradcheck_cases(opt);
  cases.push_back(network_gradcheck_case(opt));
  return run_gradcheck_suite(cases, opt.tolerance, out) ? kOk : kNumerical;
}

/// Parses `args` (without the program name) and runs the chosen command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"XceptionTime sEMG gesture classification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file overriding defaults");
  app.allow_config_extras(false);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic recording in the DB1 CSV schema");
  s->add_option("--classes", synth.opt.num_classes, "Gesture classes")->capture_default_str();
  s->add_option("--channels", synth.opt.channels, "Electrode channels")->capture_default_str();
  s->add_option("--reps", synth.opt.repetitions, "Repetitions per gesture")->capture_default_str();
  s->add_option("--seed", synth.opt.seed, "Random seed")->capture_default_str();
  s->add_option("--disparity", synth.opt.amplitude_disparity, "Largest/smallest channel gain")->capture_default_str();
  s->add_option("--snr-db", synth.opt.snr_db, "Signal-to-noise ratio in dB")->capture_default_str();
  s->add_option("--gesture-s", synth.opt.gesture_seconds, "Gesture duration in seconds")->capture_default_str();
  s->add_option("--rest-s", synth.opt.rest_seconds, "Rest duration in seconds")->capture_default_str();
  s->add_option("--out", synth.out, "Output CSV path")->required();

  PreprocessArgs prep;
  auto* p = app.add_subcommand("preprocess", "Filter, normalize and window a recording");
  p->add_option("--in", prep.inputs, "Input CSV path(s), one per subject")->required()->delimiter(',');
  p->add_option("--out", prep.out, "Output window file")->required();
  p->add_option("--window-ms", prep.cfg.window_ms, "Window length in ms")->capture_default_str();
  p->add_option("--step-ms", prep.cfg.step_ms, "Window step in ms")->capture_default_str();
  p->add_option("--norm", prep.norm, "mu-law | minmax | none")->capture_default_str();
  p->add_option("--mu", prep.cfg.mu, "mu-law parameter")->capture_default_str();
  p->add_option("--fc", prep.cfg.cutoff_hz, "Low-pass cutoff in Hz")->capture_default_str();
  p->add_option("--fs", prep.cfg.fs, "Sampling rate in Hz")->capture_default_str();
  p->add_option("--two-pass", prep.cfg.two_pass, "Zero-phase forward-backward filtering")->capture_default_str();
  p->add_option("--channels", prep.channels, "Electrode channels in the CSV")->capture_default_str();
  p->add_option("--test-reps", prep.cfg.test_repetitions, "Held-out repetitions")->delimiter(',')->capture_default_str();
  p->add_option("--classes", prep.cfg.num_classes, "Class count (0: largest stimulus label)")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train on one or more window files (several lengths: mixed-window training)");
  t->add_option("--data", tr.data, "Window file path(s)")->required()->delimiter(',');
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--metrics", tr.metrics, "Metrics log path (default: <out>.metrics.tsv)");
  t->add_option("--epochs", tr.cfg.epochs, "Epochs")->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Random seed")->capture_default_str();
  t->add_option("--variant", tr.variant, "base | v2")->capture_default_str();
  t->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--lr", tr.cfg.lr0, "Initial learning rate")->capture_default_str();
  t->add_option("--cycle-epochs", tr.cfg.cycle_epochs, "Learning-rate cycle length")->capture_default_str();
  t->add_flag("--log-test", tr.log_test, "Evaluate held-out repetitions after every epoch");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a window file");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  e->add_option("--data", ev.data, "Window file path")->required();
  e->add_option("--report", ev.report, "Report output path");
  e->add_option("--split", ev.split, "test | train | all")->capture_default_str();

  CountArgs cnt;
  auto* c = app.add_subcommand("count-params", "Print trainable parameter counts");
  c->add_option("--variant", cnt.variant, "base | v2")->capture_default_str();
  c->add_option("--classes", cnt.classes, "Output classes")->capture_default_str();
  c->add_option("--channels", cnt.channels, "Input channels")->capture_default_str();

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Verify gradients against central differences");
  g->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  g->add_option("--samples", gc.samples, "Sampled coordinates per network tensor")->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (p->parsed()) return cmd_preprocess(prep, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (c->parsed()) return cmd_count_params(cnt, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kUsage;
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kNumerical;
  } catch (const ShapeError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kData;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace xtime::cli

#endif  // XTIME_CLI_HPP
