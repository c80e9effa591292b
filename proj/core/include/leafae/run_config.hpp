#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leafae/data.hpp"
#include "leafae/models.hpp"

namespace leafae::cli {

/// Bad command line or configuration; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Command { train, evaluate, localize, compare, generate_synthetic };

std::string_view to_string(Command c);
Command parse_command(std::string_view name);

enum class CompareMode { epochs, time_equivalent };

struct RunConfig {
  models::ModelKind model = models::ModelKind::cae;
  std::filesystem::path data;
  std::optional<std::size_t> size;  // 256 for models, 32 for synthetic tiles
  std::optional<std::size_t> epochs;
  std::optional<double> time_budget;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta = 0.25;
  std::size_t codebook_size = 512;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::filesystem::path checkpoint;  // default: <out>/checkpoint.lae
  std::filesystem::path image;
  bool high_contrast = false;
  double threshold_percentile = 95.0;
  double contrast_percentile = 99.0;
  std::size_t repeat = 1;
  CompareMode compare_mode = CompareMode::epochs;
  std::vector<data::Augmentation> augment;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  std::size_t synthetic_healthy = 280;
  std::size_t synthetic_diseased = 40;

  std::size_t input_size(std::size_t fallback = 256) const { return size.value_or(fallback); }
  std::filesystem::path checkpoint_path() const;
  data::SplitFractions fractions() const;
  /// Model hyperparameters for `kind` (epochs default per kind).
  models::ModelConfig model_config(models::ModelKind kind) const;

  /// Throws UsageError naming the first invalid field for the command.
  void validate(Command command) const;
};

/// Keys accepted in config files and as `--key value` flags.
const std::vector<std::string>& setting_keys();

/// Applies one key=value setting; throws UsageError for unknown keys or
/// malformed values. Boolean keys take true/false/1/0/yes/no.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Parses flat `key = value` text ('#' starts a comment).
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                   const std::string& source);

/// Reads and applies a config file.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

}  // namespace leafae::cli
