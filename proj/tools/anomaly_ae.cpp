// anomaly-ae: train, evaluate and compare leaf-disease autoencoders.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "leafae/commands.hpp"

namespace {

using leafae::cli::Command;

struct Flags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  bool high_contrast = false;
  CLI::Option* high_contrast_flag = nullptr;
};

void add_flags(CLI::App& sub, Flags& f) {
  sub.add_option("--config", f.config_file, "flat key=value configuration file");
  for (const std::string& key : leafae::cli::setting_keys()) {
    if (key == "high-contrast") continue;
    f.options[key] = sub.add_option("--" + key, f.values[key]);
  }
  f.high_contrast_flag = sub.add_flag("--high-contrast", f.high_contrast, "also write the high-contrast heatmap");
  sub.get_option("--model")->description("cae | cvae | vqvae");
  sub.get_option("--data")->description("dataset root with healthy/ and diseased/");
  sub.get_option("--size")->description("input size: 256, or 32 for the desk variant");
  sub.get_option("--epochs")->description("epochs (default 200/100/50 for cae/cvae/vqvae)");
  sub.get_option("--time-budget")->description("wall-clock training budget in seconds");
  sub.get_option("--out")->description("output directory");
  sub.get_option("--checkpoint")->description("checkpoint file (default <out>/checkpoint.lae)");
  sub.get_option("--image")->description("image to localize");
  sub.get_option("--mode")->description("compare mode: epochs | te");
  sub.get_option("--repeat")->description("compare: training repeats, median time reported");
  sub.get_option("--augment")->description("comma list of flip_h,flip_v,rot90,rot180,rot270 or all");
}

leafae::cli::RunConfig build_config(const Flags& f) {
  leafae::cli::RunConfig cfg;
  if (!f.config_file.empty()) leafae::cli::apply_config_file(cfg, f.config_file);
  for (const std::string& key : leafae::cli::setting_keys()) {
    if (key == "high-contrast") continue;
    if (f.options.at(key)->count() > 0) leafae::cli::apply_setting(cfg, key, f.values.at(key));
  }
  if (f.high_contrast_flag->count() > 0) cfg.high_contrast = f.high_contrast;
  return cfg;
}

int run(Command command, const leafae::cli::RunConfig& cfg) {
  switch (command) {
    case Command::train: leafae::cli::cmd_train(cfg, std::cout); break;
    case Command::evaluate: leafae::cli::cmd_evaluate(cfg, std::cout); break;
    case Command::localize: leafae::cli::cmd_localize(cfg, std::cout); break;
    case Command::compare: leafae::cli::cmd_compare(cfg, std::cout); break;
    case Command::generate_synthetic: leafae::cli::cmd_generate_synthetic(cfg, std::cout); break;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised leaf anomaly detection with convolutional autoencoders", "anomaly-ae"};
  app.require_subcommand(1);

  const std::pair<Command, const char*> commands[] = {
      {Command::train, "train a model on the healthy training split"},
      {Command::evaluate, "score the test split and write the anomaly report"},
      {Command::localize, "write the reconstruction-error heatmap of one image"},
      {Command::compare, "train and evaluate CAE, CVAE and VQ-VAE side by side"},
      {Command::generate_synthetic, "write the synthetic leaf benchmark"},
  };
  std::map<CLI::App*, std::pair<Command, Flags>> subs;
  for (const auto& [command, help] : commands) {
    CLI::App* sub = app.add_subcommand(std::string(leafae::cli::to_string(command)), help);
    auto& entry = subs[sub];
    entry.first = command;
    add_flags(*sub, entry.second);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto& [sub, entry] : subs) {
      if (sub->parsed()) return run(entry.first, build_config(entry.second));
    }
  } catch (const leafae::cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
