#include "leafae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <tuple>
#include <nlohmann/json.hpp>

namespace leafae::cli {

namespace {

using Json = nlohmann::ordered_json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

Json config_to_json(const models::ModelConfig& c) {
  Json j;
  j["kind"] = std::string(models::to_string(c.kind));
  j["height"] = c.height;
  j["width"] = c.width;
  j["channels"] = c.channels;
  j["latent_height"] = c.latent_height;
  j["latent_width"] = c.latent_width;
  j["latent_channels"] = c.latent_channels;
  j["bottleneck"] = c.bottleneck;
  j["codebook_size"] = c.codebook_size;
  j["beta"] = c.beta;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

models::ModelConfig config_from_json(const Json& j) {
  models::ModelConfig c;
  c.kind = models::parse_model_kind(j.at("kind").get<std::string>());
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.latent_height = j.at("latent_height").get<std::size_t>();
  c.latent_width = j.at("latent_width").get<std::size_t>();
  c.latent_channels = j.at("latent_channels").get<std::size_t>();
  c.bottleneck = j.at("bottleneck").get<std::size_t>();
  c.codebook_size = j.at("codebook_size").get<std::size_t>();
  c.beta = j.at("beta").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Json metadata_to_json(const TrainingMetadata& m) {
  Json j;
  j["epochs_run"] = m.epochs_run;
  j["final_loss"] = m.final_loss;
  j["seed"] = m.seed;
  j["train_seconds"] = m.train_seconds;
  j["validation_fraction"] = m.validation_fraction;
  j["test_fraction"] = m.test_fraction;
  return j;
}

TrainingMetadata metadata_from_json(const Json& j) {
  TrainingMetadata m;
  m.epochs_run = j.at("epochs_run").get<std::size_t>();
  m.final_loss = j.at("final_loss").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.train_seconds = j.at("train_seconds").get<double>();
  m.validation_fraction = j.at("validation_fraction").get<double>();
  m.test_fraction = j.at("test_fraction").get<double>();
  return m;
}

void append_le_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  std::uint8_t* dst = out.data() + start;
  for (float v : values) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) *dst++ = static_cast<std::uint8_t>(bits >> (8 * i));
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = config_to_json(ckpt.config);
  Json manifest = Json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    Json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    e["bytes"] = t.size() * 4;
    manifest.push_back(std::move(e));
    offset += t.size() * 4;
  }
  header["tensors"] = std::move(manifest);
  header["metadata"] = metadata_to_json(ckpt.metadata);
  const std::string text = header.dump(1);

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& entry : ckpt.tensors) append_le_floats(out, entry.second.data());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint header in " + source);
  }
  const std::size_t header_len = get_u32(bytes.data() + 4);
  if (header_len > bytes.size() - 8) throw FormatError("truncated checkpoint header in " + source);

  Json header;
  try {
    header = Json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header in " + source + ": " + e.what());
  }

  Checkpoint ckpt;
  std::vector<std::tuple<std::string, Shape, std::size_t>> entries;
  std::size_t expected_offset = 0;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("unsupported version " + std::to_string(version) + " in " + source +
                        " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    ckpt.config = config_from_json(header.at("config"));
    ckpt.metadata = metadata_from_json(header.at("metadata"));
    for (const Json& e : header.at("tensors")) {
      const Shape shape = e.at("shape").get<Shape>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t nbytes = e.at("bytes").get<std::size_t>();
      if (offset != expected_offset || nbytes != element_count(shape) * 4) {
        throw FormatError("inconsistent tensor manifest entry '" + e.at("name").get<std::string>() +
                          "' in " + source);
      }
      expected_offset += nbytes;
      entries.emplace_back(e.at("name").get<std::string>(), shape, offset);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint header in " + source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError("malformed checkpoint header in " + source + ": " + e.what());
  }

  const std::size_t payload_start = 8 + header_len;
  const std::size_t payload = bytes.size() - payload_start;
  if (payload < expected_offset) {
    throw FormatError("truncated checkpoint " + source + ": payload has " + std::to_string(payload) +
                      " bytes, manifest needs " + std::to_string(expected_offset));
  }
  if (payload > expected_offset) {
    throw FormatError("checkpoint size mismatch in " + source + ": " +
                      std::to_string(payload - expected_offset) + " trailing bytes");
  }

  for (auto& [name, shape, offset] : entries) {
    Tensor32 t(shape);
    const std::uint8_t* src = bytes.data() + payload_start + offset;
    for (float& v : t.data()) {
      v = std::bit_cast<float>(get_u32(src));
      src += 4;
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

Checkpoint make_checkpoint(const models::Autoencoder<float>& model, const TrainingMetadata& meta) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.metadata = meta;
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) ckpt.tensors.emplace_back(params.name(i), params[i]);
  return ckpt;
}

std::unique_ptr<models::Autoencoder<float>> restore_model(const Checkpoint& ckpt) {
  std::unique_ptr<models::Autoencoder<float>> model;
  try {
    model = models::make_model<float>(ckpt.config);
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("checkpoint config rejected: ") + e.what());
  }
  auto& params = model->parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, the " +
                      std::string(models::to_string(ckpt.config.kind)) + " architecture has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (name != params.name(i) || t.shape() != params[i].shape()) {
      throw FormatError("checkpoint tensor '" + name + "' " + to_string(t.shape()) +
                        " does not match '" + params.name(i) + "' " + to_string(params[i].shape()));
    }
    params[i] = t;
  }
  return model;
}

}  // namespace leafae::cli
