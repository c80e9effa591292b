#include "leafae/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace leafae::cli {

std::string_view to_string(Command c) {
  switch (c) {
    case Command::train: return "train";
    case Command::evaluate: return "evaluate";
    case Command::localize: return "localize";
    case Command::compare: return "compare";
    case Command::generate_synthetic: return "generate-synthetic";
  }
  return "?";
}

Command parse_command(std::string_view name) {
  for (Command c : {Command::train, Command::evaluate, Command::localize, Command::compare,
                    Command::generate_synthetic}) {
    if (to_string(c) == name) return c;
  }
  throw UsageError("unknown command '" + std::string(name) + "'");
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out / "checkpoint.lae" : checkpoint;
}

data::SplitFractions RunConfig::fractions() const {
  return {1.0 - validation_fraction - test_fraction, validation_fraction, test_fraction};
}

models::ModelConfig RunConfig::model_config(models::ModelKind kind) const {
  models::ModelConfig c = models::ModelConfig::defaults(kind, input_size());
  if (epochs) c.epochs = *epochs;
  c.batch_size = batch_size;
  c.learning_rate = learning_rate;
  c.beta = beta;
  c.codebook_size = codebook_size;
  c.seed = seed;
  return c;
}

void RunConfig::validate(Command command) const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw UsageError("invalid value for '" + field + "': " + why);
  };
  const bool trains = command == Command::train || command == Command::compare;
  const bool needs_data = trains || command == Command::evaluate;
  if (needs_data && data.empty()) fail("data", "a dataset directory is required");
  if (command != Command::generate_synthetic && size && *size != 256 && *size != 32) {
    fail("size", "must be 256 or 32");
  }
  if (command == Command::generate_synthetic && size && *size < 8) fail("size", "must be at least 8");
  if (epochs && time_budget) fail("epochs", "give either epochs or time-budget, not both");
  if (epochs && *epochs == 0) fail("epochs", "must be positive");
  if (time_budget && !(*time_budget > 0.0 && std::isfinite(*time_budget))) {
    fail("time-budget", "must be a positive number of seconds");
  }
  if (batch_size == 0) fail("batch-size", "must be positive");
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) fail("lr", "must be non-negative");
  if (!(beta > 0.0 && std::isfinite(beta))) fail("beta", "must be positive");
  if (codebook_size == 0) fail("codebook-size", "must be positive");
  if (!(threshold_percentile > 0.0 && threshold_percentile <= 100.0)) {
    fail("threshold-percentile", "must lie in (0,100]");
  }
  if (!(contrast_percentile > 50.0 && contrast_percentile < 100.0)) {
    fail("contrast-percentile", "must lie strictly between 50 and 100");
  }
  if (repeat == 0) fail("repeat", "must be positive");
  if (!(validation_fraction >= 0.0 && test_fraction > 0.0 &&
        validation_fraction + test_fraction < 1.0)) {
    fail("val-fraction/test-fraction", "need val >= 0, test > 0 and val + test < 1");
  }
  if (command == Command::evaluate && validation_fraction <= 0.0) {
    fail("val-fraction", "evaluation needs a validation split for the threshold");
  }
  if (command == Command::localize && image.empty()) fail("image", "an input image is required");
  if (command == Command::generate_synthetic && synthetic_healthy == 0) {
    fail("synthetic-healthy", "must be positive");
  }
}

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = {
      "model",         "data",          "size",         "epochs",
      "time-budget",   "batch-size",    "lr",           "beta",
      "codebook-size", "seed",          "out",          "checkpoint",
      "image",         "high-contrast", "threshold-percentile",
      "contrast-percentile",            "repeat",       "mode",
      "augment",       "val-fraction",  "test-fraction", "synthetic-healthy",
      "synthetic-diseased"};
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_uint(std::string_view key, std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty() || v.front() == '-') {
    throw UsageError("invalid value for '" + std::string(key) + "': expected a non-negative integer, got '" +
                     std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw UsageError("invalid value for '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("invalid value for '" + std::string(key) + "': expected true or false, got '" +
                   std::string(v) + "'");
}

}  // namespace

void apply_setting(RunConfig& c, std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  try {
    if (key == "model") {
      c.model = models::parse_model_kind(v);
    } else if (key == "data") {
      c.data = v;
    } else if (key == "size") {
      c.size = parse_uint<std::size_t>(key, v);
    } else if (key == "epochs") {
      c.epochs = parse_uint<std::size_t>(key, v);
    } else if (key == "time-budget") {
      c.time_budget = parse_real(key, v);
    } else if (key == "batch-size") {
      c.batch_size = parse_uint<std::size_t>(key, v);
    } else if (key == "lr") {
      c.learning_rate = parse_real(key, v);
    } else if (key == "beta") {
      c.beta = parse_real(key, v);
    } else if (key == "codebook-size") {
      c.codebook_size = parse_uint<std::size_t>(key, v);
    } else if (key == "seed") {
      c.seed = parse_uint<std::uint64_t>(key, v);
    } else if (key == "out") {
      c.out = v;
    } else if (key == "checkpoint") {
      c.checkpoint = v;
    } else if (key == "image") {
      c.image = v;
    } else if (key == "high-contrast") {
      c.high_contrast = parse_bool(key, v);
    } else if (key == "threshold-percentile") {
      c.threshold_percentile = parse_real(key, v);
    } else if (key == "contrast-percentile") {
      c.contrast_percentile = parse_real(key, v);
    } else if (key == "repeat") {
      c.repeat = parse_uint<std::size_t>(key, v);
    } else if (key == "mode") {
      if (v == "epochs") {
        c.compare_mode = CompareMode::epochs;
      } else if (v == "te" || v == "time-equivalent" || v == "time_equivalent") {
        c.compare_mode = CompareMode::time_equivalent;
      } else {
        throw UsageError("invalid value for 'mode': expected epochs or te, got '" + v + "'");
      }
    } else if (key == "augment") {
      c.augment.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item == "none") continue;
        if (item == "all") {
          c.augment = data::all_augmentations();
          continue;
        }
        if (!item.empty()) c.augment.push_back(data::parse_augmentation(item));
      }
    } else if (key == "val-fraction") {
      c.validation_fraction = parse_real(key, v);
    } else if (key == "test-fraction") {
      c.test_fraction = parse_real(key, v);
    } else if (key == "synthetic-healthy") {
      c.synthetic_healthy = parse_uint<std::size_t>(key, v);
    } else if (key == "synthetic-diseased") {
      c.synthetic_diseased = parse_uint<std::size_t>(key, v);
    } else {
      throw UsageError("unknown setting '" + std::string(key) + "'");
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError("invalid value for '" + std::string(key) + "': " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                   const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
    if (end == text.size()) break;
  }
  return out;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& [key, value] : parse_config_text(ss.str(), path.string())) {
    apply_setting(config, key, value);
  }
}

}  // namespace leafae::cli
