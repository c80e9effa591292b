#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leafae/models.hpp"

namespace leafae::cli {

inline constexpr char kCheckpointMagic[4] = {'L', 'A', 'E', '1'};
inline constexpr int kCheckpointVersion = 1;

struct TrainingMetadata {
  std::size_t epochs_run = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
  double train_seconds = 0.0;
  /// Split used for training, so evaluation can rebuild the same test set.
  double validation_fraction = 0.1;
  double test_fraction = 0.1;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct Checkpoint {
  models::ModelConfig config;
  std::vector<std::pair<std::string, Tensor32>> tensors;
  TrainingMetadata metadata;
};

/// Layout: "LAE1", u32 little-endian header length, UTF-8 JSON header
/// (format_version, config, tensor manifest with shapes and byte offsets,
/// metadata), then little-endian float32 payloads in manifest order.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);

/// Validates magic, version, manifest and sizes before reading any payload.
/// Throws FormatError ("bad checkpoint header", "unsupported version", ...).
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const models::Autoencoder<float>& model, const TrainingMetadata& meta);

/// Rebuilds the model from the config and copies every tensor in, checking
/// names and shapes against the architecture.
std::unique_ptr<models::Autoencoder<float>> restore_model(const Checkpoint& ckpt);

}  // namespace leafae::cli
