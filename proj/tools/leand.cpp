#include "leand/checkpoint.hpp"
#include "leand/config.hpp"
#include "leand/evaluation.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace leand;

namespace {

struct Flags {
  std::string config;
  std::string data;
  std::string label;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::vector<std::string> variants;
};

RunConfig resolve(const Flags& f) {
  ConfigMap entries;
  if (!f.config.empty()) entries = read_config_file(f.config);
  if (!f.data.empty()) entries["data"] = f.data;
  if (!f.label.empty()) entries["label"] = f.label;
  if (!f.out.empty()) entries["out"] = f.out;
  if (!f.checkpoint.empty()) entries["checkpoint"] = f.checkpoint;
  if (f.seed) entries["seed"] = std::to_string(*f.seed);
  if (f.workers) entries["workers"] = std::to_string(*f.workers);
  RunConfig c = apply_config(RunConfig{}, entries);
  if (c.data.empty()) throw ConfigError("no dataset given (use --data or a 'data' config key)");
  if (c.out.empty()) throw ConfigError("output directory must not be empty");
  if (c.detector.architecture.encoder_sizes.empty()) throw ConfigError("no encoder architecture configured");
  return c;
}

DataTable load(const RunConfig& c) {
  CsvOptions opts;
  opts.label = parse_label_column(c.label);
  opts.anomaly_value = c.anomaly_value;
  return load_csv(c.data, opts);
}

std::string num(double v) { return format_number(v); }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i]);
  return s;
}

std::string metrics_text(const MetricReport& m) {
  std::ostringstream o;
  const auto& c = m.confusion.counts;
  o << "f1_weighted = " << num(m.f1_weighted) << '\n'
    << "accuracy = " << num(m.accuracy) << '\n'
    << "f1_anomaly = " << num(m.f1_anomaly) << '\n'
    << "true_normal_pred_normal = " << c[0][0] << '\n'
    << "true_normal_pred_anomaly = " << c[0][1] << '\n'
    << "true_anomaly_pred_normal = " << c[1][0] << '\n'
    << "true_anomaly_pred_anomaly = " << c[1][1] << '\n';
  if (m.auc_roc) o << "auc_roc = " << num(*m.auc_roc) << '\n';
  if (m.auc_pr) o << "auc_pr = " << num(*m.auc_pr) << '\n';
  return o.str();
}

std::string metrics_csv(const MetricReport& m) {
  const auto& c = m.confusion.counts;
  std::ostringstream o;
  o << num(m.f1_weighted) << ',' << num(m.accuracy) << ',' << num(m.f1_anomaly) << ',' << c[0][0] << ',' << c[0][1]
    << ',' << c[1][0] << ',' << c[1][1];
  return o.str();
}

/// Outputs are assembled in memory and written only once the command has
/// succeeded, so a failed run leaves no partial files.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string body) { files.emplace_back(std::move(name), std::move(body)); }

  void write(const fs::path& dir) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    for (const auto& [name, body] : files) {
      std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
      out << body;
      if (!out) throw IoError("failed writing '" + (dir / name).string() + "'");
    }
  }
};

std::string describe_table(const char* key, const DataTable& t) {
  std::ostringstream o;
  o << key << "_rows = " << t.count() << '\n' << key << "_anomalies = " << t.anomaly_count() << '\n';
  return o.str();
}

int cmd_train(const Flags& flags) {
  const RunConfig c = resolve(flags);
  const DataTable data = load(c);
  const auto [train, test] = split(data, c.split);
  const FitResult fitted = fit(train, c.detector);
  const FitReport& r = fitted.report;

  std::ostringstream rep;
  rep << "dataset = " << data.name << '\n'
      << "features = " << data.dim() << '\n'
      << describe_table("train", train) << describe_table("test", test)
      << "fit_rows = " << r.training_rows << '\n'
      << "pretrain_epochs = " << r.pretrain_losses.size() - 1 << '\n'
      << "pretrain_loss_initial = " << num(r.pretrain_losses.front()) << '\n'
      << "pretrain_loss_final = " << num(r.pretrain_losses.back()) << '\n'
      << "pretrain_losses = " << join(r.pretrain_losses) << '\n'
      << "aff_train_mse_initial = " << num(r.aff.train_mse_initial) << '\n'
      << "aff_train_mse_final = " << num(r.aff.train_mse_final) << '\n'
      << "aff_holdout_mse_initial = " << num(r.aff.holdout_mse_initial) << '\n'
      << "aff_holdout_mse_final = " << num(r.aff.holdout_mse_final) << '\n'
      << "aff_best_epoch = " << r.aff.best_epoch << '\n'
      << "density_rank = " << r.effective_rank << '\n'
      << "density_initial_mean_nll = " << num(r.initial_mean_nll) << '\n'
      << "joint_epochs = " << r.joint_losses.size() - 1 << '\n'
      << "joint_loss_initial = " << num(r.joint_losses.front()) << '\n'
      << "joint_loss_final = " << num(r.joint_losses.back()) << '\n'
      << "joint_losses = " << join(r.joint_losses) << '\n'
      << "anomaly_rate = " << num(r.anomaly_rate) << '\n'
      << "tau = " << num(r.tau) << '\n';

  Outputs out;
  out.add("model.bin", serialize(fitted.model));
  out.add("train_report.txt", rep.str());
  out.add("run.cfg", to_text(c));
  out.write(c.out);
  std::cout << "trained on " << train.count() << " rows; tau = " << num(r.tau) << "; wrote " << c.out << '\n';
  return 0;
}

int cmd_eval(const Flags& flags) {
  const RunConfig c = resolve(flags);
  const fs::path model_path = c.checkpoint.empty() ? fs::path(c.out) / "model.bin" : fs::path(c.checkpoint);
  const LeandModel model = load_model(model_path);
  const DataTable data = load(c);
  const auto [train, test] = split(data, c.split);
  if (test.dim() != model.input_dim()) {
    throw ConfigError("model expects " + std::to_string(model.input_dim()) + " features, data has " +
                      std::to_string(test.dim()));
  }
  const auto preds = predict_rows(model, test.features);
  MetricReport m = evaluate(model, test, c.with_auc);

  std::ostringstream csv;
  csv << "row_index,score,label\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    csv << test.source_row(static_cast<Index>(i)) << ',' << num(preds[i].score) << ','
        << (preds[i].label == Label::anomaly ? "anomaly" : "normal") << '\n';
  }
  std::ostringstream txt;
  txt << "dataset = " << data.name << '\n' << describe_table("test", test) << "tau = " << num(model.tau) << '\n'
      << metrics_text(m);

  Outputs out;
  out.add("metrics.txt", txt.str());
  out.add("predictions.csv", csv.str());
  out.add("eval.cfg", to_text(c));
  out.write(c.out);
  std::cout << "f1_weighted = " << num(m.f1_weighted) << " on " << test.count() << " test rows\n";
  return 0;
}

int cmd_gridsearch(const Flags& flags) {
  RunConfig c = resolve(flags);
  const DataTable data = load(c);
  if (c.grid_rate_auto) c.grid.anomaly_rates = rates_around(outlier_rate(data), c.grid_rate_steps, c.grid_rate_step);
  // Axes left out of the config hold the base model's value.
  if (c.grid.sigmas.empty()) c.grid.sigmas = {1.0 / std::sqrt(2.0 * c.detector.gamma)};
  if (c.grid.architectures.empty()) c.grid.architectures = {c.detector.architecture.encoder_sizes};
  if (c.grid.rff_dims.empty()) c.grid.rff_dims = {c.detector.rff_dim};
  if (c.grid.num_eigs.empty()) c.grid.num_eigs = {c.detector.num_eigs};
  if (c.grid.alphas.empty()) c.grid.alphas = {c.detector.alpha};
  GridOptions opts;
  opts.seed = c.split.seed;
  opts.split = c.split;
  opts.selection_fraction = c.selection_fraction;
  opts.workers = c.workers;
  const auto runs = grid_search(data, c.detector, c.grid, opts);

  std::ostringstream csv;
  csv << "rank,run,status,sigma,encoder,rff_dim,num_eigs,alpha,anomaly_rate,"
         "selection_f1_weighted,selection_accuracy,selection_f1_anomaly,selection_tn,selection_fp,selection_fn,"
         "selection_tp,holdout_f1_weighted,holdout_accuracy,holdout_f1_anomaly,holdout_tn,holdout_fp,holdout_fn,"
         "holdout_tp,error\n";
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const GridRun& r = runs[k];
    std::string enc;
    for (std::size_t i = 0; i < r.point.encoder_sizes.size(); ++i) enc += (i ? "-" : "") + std::to_string(r.point.encoder_sizes[i]);
    csv << k + 1 << ',' << r.index << ',' << (r.ok ? "ok" : "failed") << ',' << num(r.point.sigma) << ',' << enc << ','
        << r.point.rff_dim << ',' << r.point.num_eigs << ',' << num(r.point.alpha) << ','
        << (r.point.anomaly_rate ? num(*r.point.anomaly_rate) : "auto") << ',';
    if (r.ok) {
      csv << metrics_csv(r.selection) << ',' << metrics_csv(r.holdout) << ",\n";
    } else {
      std::string msg = r.error;
      for (char& ch : msg)
        if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
      csv << ",,,,,,,,,,,,,," << msg << '\n';
    }
  }
  std::ostringstream rep;
  rep << "dataset = " << data.name << '\n'
      << "combinations = " << c.grid.combinations() << '\n'
      << "runs = " << runs.size() << '\n'
      << "failed = " << std::count_if(runs.begin(), runs.end(), [](const GridRun& r) { return !r.ok; }) << '\n';
  if (!runs.empty() && runs.front().ok) {
    rep << "best = " << describe(runs.front().point) << '\n'
        << "best_selection_f1_weighted = " << num(runs.front().selection.f1_weighted) << '\n'
        << "best_holdout_f1_weighted = " << num(runs.front().holdout.f1_weighted) << '\n';
  }
  Outputs out;
  out.add("ranking.csv", csv.str());
  out.add("gridsearch_report.txt", rep.str());
  out.add("run.cfg", to_text(c));
  out.write(c.out);
  std::cout << runs.size() << " runs ranked; wrote " << (fs::path(c.out) / "ranking.csv").string() << '\n';
  return 0;
}

int cmd_ablation(const Flags& flags) {
  const RunConfig c = resolve(flags);
  std::vector<Variant> variants;
  for (const auto& v : flags.variants) variants.push_back(parse_variant(v));
  if (variants.empty()) variants.assign(kAllVariants.begin(), kAllVariants.end());
  const DataTable data = load(c);
  const auto [train, test] = split(data, c.split);
  const auto rows = ablation(train, test, c.detector, variants, c.kde);

  std::ostringstream csv;
  csv << "variant,f1_weighted,accuracy,f1_anomaly,tn,fp,fn,tp\n";
  for (const auto& r : rows) csv << to_string(r.variant) << ',' << metrics_csv(r.metrics) << '\n';
  Outputs out;
  out.add("ablation.csv", csv.str());
  out.add("run.cfg", to_text(c));
  out.write(c.out);
  std::cout << csv.str();
  return 0;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent density anomaly detection: train, evaluate, grid-search and ablate."};
  app.require_subcommand(1);
  Flags flags;

  auto common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--data", flags.data, "CSV dataset");
    sub->add_option("--label", flags.label, "label column (index or header name; default last)");
    sub->add_option("--seed", flags.seed, "seed for splitting and training");
    sub->add_option("--out", flags.out, "output directory");
  };
  auto* train = app.add_subcommand("train", "fit a model and write a checkpoint and training report");
  common(train);
  auto* eval = app.add_subcommand("eval", "score the test split with a checkpoint");
  common(eval);
  eval->add_option("--checkpoint", flags.checkpoint, "model file (default <out>/model.bin)");
  auto* grid = app.add_subcommand("gridsearch", "rank parameter combinations from the grid.* keys");
  common(grid);
  grid->add_option("--workers", flags.workers, "parallel training runs")->check(CLI::PositiveNumber);
  auto* abl = app.add_subcommand("ablation", "compare KDE-only, AE-only, NoRecon and full models");
  common(abl);
  abl->add_option("--variant", flags.variants, "variant(s) to run: kde, ae, norecon, leand");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(flags);
    if (*eval) return cmd_eval(flags);
    if (*grid) return cmd_gridsearch(flags);
    if (*abl) return cmd_ablation(flags);
  } catch (const std::exception& e) {
    std::cerr << "leand: " << e.what() << '\n';
    return exit_code(e);
  }
  return 2;
}
