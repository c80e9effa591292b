#include "leafae/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace leafae::cli {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

data::DatasetSplit load_split(const RunConfig& c, std::size_t size, const data::SplitFractions& f,
                              std::uint64_t seed, std::ostream& log) {
  data::DatasetSplit split = data::load_dataset(c.data, data::LoadOptions{f, seed, size});
  for (const std::string& w : split.warnings) log << "warning: " << w << '\n';
  return split;
}

std::vector<const data::LabeledImage*> pointers(const std::vector<data::LabeledImage>& images) {
  std::vector<const data::LabeledImage*> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(&img);
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct TrainedModel {
  std::unique_ptr<models::Autoencoder<float>> model;
  optim::TrainResult result;
};

TrainedModel train_model(const models::ModelConfig& mc, std::span<const data::LabeledImage> train_set,
                         const optim::TrainBudget& budget, std::ostream& log, bool verbose) {
  TrainedModel t{models::make_model<float>(mc), {}};
  optim::TrainOptions opts;
  opts.batch_size = mc.batch_size;
  opts.seed = mc.seed;
  opts.adam.learning_rate = mc.learning_rate;
  if (verbose) {
    opts.on_epoch = [&log](const optim::EpochRecord& r) {
      log << "epoch " << r.epoch << " loss " << fmt("%.6g", r.loss) << " (" << fmt("%.2f", r.seconds)
          << " s)" << std::endl;
    };
  }
  t.result = optim::train<float>(*t.model, train_set, budget, opts);
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate(Command::train);
  const models::ModelConfig mc = config.model_config(config.model);
  data::DatasetSplit split = load_split(config, mc.height, config.fractions(), config.seed, log);
  const std::vector<data::LabeledImage> train_set = data::expand_training_set(split.train, config.augment);
  log << "training " << models::to_string(mc.kind) << " on " << train_set.size() << " images ("
      << split.train.size() << " before augmentation)\n";

  const optim::TrainBudget budget = config.time_budget
                                        ? optim::TrainBudget::wall_clock(*config.time_budget)
                                        : optim::TrainBudget::fixed_epochs(mc.epochs);
  TrainedModel t = train_model(mc, train_set, budget, log, true);
  if (t.result.budget_overrun) log << "warning: one epoch exceeded the time budget\n";

  ensure_dir(config.out);
  TrainOutcome outcome;
  outcome.result = t.result;
  outcome.checkpoint = config.checkpoint_path();
  if (outcome.checkpoint.has_parent_path()) ensure_dir(outcome.checkpoint.parent_path());
  outcome.loss_csv = config.out / "loss.csv";

  TrainingMetadata meta;
  meta.epochs_run = t.result.epochs_completed;
  meta.final_loss = t.result.loss_history.back();
  meta.seed = config.seed;
  meta.train_seconds = t.result.elapsed_seconds;
  meta.validation_fraction = config.validation_fraction;
  meta.test_fraction = config.test_fraction;
  save_checkpoint(outcome.checkpoint, make_checkpoint(*t.model, meta));
  optim::write_loss_csv(outcome.loss_csv, t.result.loss_history);

  log << "final loss " << fmt("%.6g", meta.final_loss) << " after " << meta.epochs_run << " epochs ("
      << fmt("%.1f", meta.train_seconds) << " s)\n"
      << "checkpoint " << outcome.checkpoint.string() << "\nloss history " << outcome.loss_csv.string()
      << '\n';
  return outcome;
}

detect::AnomalyReport evaluate_model(const models::Autoencoder<float>& model,
                                     const data::DatasetSplit& split, double threshold_percentile) {
  if (split.validation.empty()) throw ContractViolation("evaluation needs validation images");
  if (split.test.empty()) throw ContractViolation("evaluation needs test images");
  const auto val_scores = detect::reconstruction_scores(model, pointers(split.validation));
  const double threshold = detect::choose_threshold(val_scores, threshold_percentile);
  const auto test_ptrs = pointers(split.test);
  const auto scores = detect::reconstruction_scores(model, test_ptrs);
  std::vector<detect::ScoredImage> scored;
  for (std::size_t i = 0; i < test_ptrs.size(); ++i) {
    scored.push_back({test_ptrs[i]->source, test_ptrs[i]->label, scores[i], detect::Verdict::healthy});
  }
  return detect::build_report(std::move(scored), threshold);
}

EvaluateOutcome cmd_evaluate(const RunConfig& config, std::ostream& log) {
  config.validate(Command::evaluate);
  const Checkpoint ckpt = load_checkpoint(config.checkpoint_path());
  const auto model = restore_model(ckpt);
  const data::SplitFractions f{1.0 - ckpt.metadata.validation_fraction - ckpt.metadata.test_fraction,
                               ckpt.metadata.validation_fraction, ckpt.metadata.test_fraction};
  const data::DatasetSplit split = load_split(config, ckpt.config.height, f, ckpt.metadata.seed, log);

  EvaluateOutcome outcome;
  outcome.report = evaluate_model(*model, split, config.threshold_percentile);
  ensure_dir(config.out);
  outcome.csv = config.out / "report.csv";
  outcome.json = config.out / "summary.json";
  detect::write_report_csv(outcome.csv, outcome.report);
  detect::write_report_json(outcome.json, outcome.report);
  log << detect::report_summary_json(outcome.report) << '\n'
      << "report " << outcome.csv.string() << "\nsummary " << outcome.json.string() << '\n';
  return outcome;
}

std::vector<fs::path> cmd_localize(const RunConfig& config, std::ostream& log) {
  config.validate(Command::localize);
  if (!fs::is_regular_file(config.image)) throw UsageError("image not found: " + config.image.string());
  const Checkpoint ckpt = load_checkpoint(config.checkpoint_path());
  const auto model = restore_model(ckpt);
  const Tensor32 image = data::resize(data::read_image(config.image), ckpt.config.height, ckpt.config.width);
  const Tensor32 rec = detect::reconstruct_image(*model, image);
  const detect::Heatmap raw = detect::pixel_error(image, rec);
  const detect::Heatmap map = detect::normalize(raw);

  ensure_dir(config.out);
  std::vector<fs::path> written{config.out / "heatmap.png", config.out / "reconstruction.png"};
  data::write_png(written[0], detect::render(map));
  data::write_png(written[1], rec);
  if (config.high_contrast) {
    written.push_back(config.out / "heatmap_high_contrast.png");
    data::write_png(written.back(), detect::render(detect::high_contrast(map, config.contrast_percentile)));
  }
  const float peak = *std::max_element(raw.values.begin(), raw.values.end());
  double mse = 0.0;
  for (float v : raw.values) mse += v;
  mse /= static_cast<double>(raw.values.size());
  log << "reconstruction MSE " << fmt("%.6g", mse) << ", peak pixel error " << fmt("%.6g", peak) << '\n';
  for (const auto& p : written) log << "wrote " << p.string() << '\n';
  return written;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %7s %10s %14s %15s %10s %8s\n", "model", "epochs", "time[s]",
                "MSEx1e3 health", "MSEx1e3 disease", "Dx1e3", "AUC");
  os << buf;
  for (models::ModelKind kind : {models::ModelKind::cae, models::ModelKind::cvae, models::ModelKind::vqvae}) {
    for (const CompareRow& r : rows) {
      if (r.model != kind) continue;
      std::snprintf(buf, sizeof buf, "%-8s %7zu %10.2f %14.4f %15.4f %10.4f %8.4f\n",
                    std::string(models::to_string(r.model)).c_str(), r.epochs, r.train_seconds,
                    r.mse_healthy * 1e3, r.mse_diseased * 1e3, r.delta * 1e3, r.auc);
      os << buf;
    }
  }
  return os.str();
}

std::vector<CompareRow> cmd_compare(const RunConfig& config, std::ostream& log) {
  config.validate(Command::compare);
  const std::size_t size = config.input_size();
  const data::DatasetSplit split = load_split(config, size, config.fractions(), config.seed, log);
  const std::vector<data::LabeledImage> train_set = data::expand_training_set(split.train, config.augment);
  const bool te = config.compare_mode == CompareMode::time_equivalent;

  ensure_dir(config.out);
  const fs::path csv_path = config.out / "compare.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << "model,mode,epochs,train_seconds,mse_healthy_x1e3,mse_diseased_x1e3,delta_x1e3,auc_roc\n";
  csv.flush();

  std::vector<CompareRow> rows;
  double vq_seconds = 0.0;
  for (models::ModelKind kind : {models::ModelKind::vqvae, models::ModelKind::cae, models::ModelKind::cvae}) {
    const models::ModelConfig mc = config.model_config(kind);
    optim::TrainBudget budget = optim::TrainBudget::fixed_epochs(mc.epochs);
    if (config.time_budget) budget = optim::TrainBudget::wall_clock(*config.time_budget);
    if (te && kind != models::ModelKind::vqvae) budget = optim::TrainBudget::wall_clock(vq_seconds);

    std::vector<double> times;
    TrainedModel last;
    for (std::size_t r = 0; r < config.repeat; ++r) {
      log << "training " << models::to_string(kind) << " (run " << r + 1 << "/" << config.repeat << ")\n";
      last = train_model(mc, train_set, budget, log, false);
      times.push_back(last.result.elapsed_seconds);
      log << "  " << last.result.epochs_completed << " epochs, " << fmt("%.4f", times.back()) << " s"
          << std::endl;
    }
    if (kind == models::ModelKind::vqvae) vq_seconds = median(times);

    const detect::AnomalyReport report = evaluate_model(*last.model, split, config.threshold_percentile);
    CompareRow row{kind,
                   last.result.epochs_completed,
                   median(times),
                   report.mean_healthy,
                   report.mean_diseased,
                   report.diseased_count > 0 ? report.delta() : 0.0,
                   report.auc,
                   last.result.loss_history};
    rows.push_back(row);
    const char* mode = te && kind != models::ModelKind::vqvae ? "te" : "epochs";
    csv << models::to_string(kind) << ',' << mode << ',' << row.epochs << ',' << fmt("%.4f", row.train_seconds)
        << ',' << fmt("%.6f", row.mse_healthy * 1e3) << ',' << fmt("%.6f", row.mse_diseased * 1e3) << ','
        << fmt("%.6f", row.delta * 1e3) << ',' << fmt("%.6f", row.auc) << '\n';
    csv.flush();
    log << "  median " << fmt("%.2f", row.train_seconds) << " s, AUC " << fmt("%.4f", row.auc) << std::endl;
  }
  log << format_compare_table(rows) << "table " << csv_path.string() << '\n';
  return rows;
}

void cmd_generate_synthetic(const RunConfig& config, std::ostream& log) {
  config.validate(Command::generate_synthetic);
  data::SyntheticOptions opts;
  opts.size = config.input_size(32);
  opts.seed = config.seed;
  ensure_dir(config.out);
  data::write_synthetic_dataset(config.out, opts, config.synthetic_healthy, config.synthetic_diseased);

  // Balanced split: validation and healthy test sets as large as the diseased pool.
  const double fraction = std::min(0.45, static_cast<double>(std::max<std::size_t>(1, config.synthetic_diseased)) /
                                             static_cast<double>(config.synthetic_healthy));
  const fs::path cfg_path = config.out / "benchmark.cfg";
  std::ofstream cfg(cfg_path);
  if (!cfg) throw std::runtime_error("cannot write " + cfg_path.string());
  cfg << "# synthetic leaf benchmark\n"
      << "data = " << fs::absolute(config.out).lexically_normal().string() << '\n'
      << "size = " << opts.size << '\n'
      << "val-fraction = " << fmt("%.17g", fraction) << '\n'
      << "test-fraction = " << fmt("%.17g", fraction) << '\n';
  log << "wrote " << config.synthetic_healthy << " healthy and " << config.synthetic_diseased
      << " diseased tiles to " << config.out.string() << "\nconfig " << cfg_path.string() << '\n';
}

}  // namespace leafae::cli
