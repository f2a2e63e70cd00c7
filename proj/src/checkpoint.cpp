#include <cstdint>
#include <fstream>

#include "strfsed/frontend.hpp"
#include "strfsed/model.hpp"

namespace strfsed {

namespace fs = std::filesystem;

fs::path checkpoint_stem(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".bin") return fs::path(path).replace_extension();
  return path;
}

void save_checkpoint(ModelGraph& model, const fs::path& path, const std::vector<std::string>& labels) {
  const fs::path stem = checkpoint_stem(path);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  fs::path json_path = stem, bin_path = stem;
  json_path += ".json";
  bin_path += ".bin";

  nlohmann::json manifest;
  manifest["format"] = "strfsed-checkpoint";
  manifest["version"] = 1;
  manifest["architecture"] = to_string(model.architecture());
  manifest["config"] = model.config().to_json();
  manifest["blob"] = bin_path.filename().string();
  if (!labels.empty()) {
    if (labels.size() != model.config().n_classes) {
      throw CheckpointError("checkpoint: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(model.config().n_classes) + " classes");
    }
    manifest["labels"] = labels;
  }
  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::uint8_t> blob;
  std::size_t offset = 0;
  for (const auto& [name, p] : model.named_parameters()) {
    entries.push_back({{"name", name},
                       {"shape", p->value.shape()},
                       {"offset", offset},
                       {"count", p->value.size()},
                       {"dtype", "float32"},
                       {"trainable", p->trainable}});
    for (double v : p->value.values()) append_f32le(blob, v);
    offset += p->value.size();
  }
  manifest["parameters"] = entries;
  manifest["total_values"] = offset;

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw CheckpointError("cannot write " + bin_path.string());
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw CheckpointError("cannot write " + json_path.string());
  js << manifest.dump(2) << '\n';
  if (!bin || !js) throw CheckpointError("write failed for checkpoint " + stem.string());
}

ModelGraph load_checkpoint(const fs::path& path) {
  const fs::path stem = checkpoint_stem(path);
  fs::path json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw CheckpointError("cannot open checkpoint manifest " + json_path.string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + json_path.string() + ": " + e.what());
  }
  if (manifest.value("format", std::string()) != "strfsed-checkpoint") {
    throw CheckpointError(json_path.string() + " is not a checkpoint manifest");
  }
  ModelConfig cfg;
  try {
    const std::string tag = manifest.at("architecture").get<std::string>();
    architecture_from_string(tag);
    cfg = ModelConfig::from_json(manifest.at("config"));
    if (to_string(cfg.architecture) != tag) throw CheckpointError("architecture tag mismatch");
  } catch (const UnknownArchitecture& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }

  const fs::path bin_path = stem.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw CheckpointError("cannot open checkpoint blob " + bin_path.string());
  const std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const std::vector<std::uint8_t> blob(raw.begin(), raw.end());
  const std::size_t total = manifest.at("total_values").get<std::size_t>();
  if (blob.size() != 4 * total) {
    throw CheckpointError("checkpoint blob " + bin_path.string() + " holds " +
                          std::to_string(blob.size()) + " bytes, manifest expects " +
                          std::to_string(4 * total) + (blob.size() < 4 * total ? " (truncated)" : ""));
  }

  ModelGraph model(cfg);
  auto params = model.named_parameters();
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size()) {
    throw CheckpointError("checkpoint lists " + std::to_string(entries.size()) +
                          " parameters, architecture has " + std::to_string(params.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    auto& [name, p] = params[i];
    if (e.at("name").get<std::string>() != name) {
      throw CheckpointError("checkpoint parameter " + std::to_string(i) + " is '" +
                            e.at("name").get<std::string>() + "', expected '" + name + "'");
    }
    if (e.at("shape").get<Shape>() != p->value.shape()) {
      throw CheckpointError("checkpoint parameter '" + name + "' has shape " +
                            shape_string(e.at("shape").get<Shape>()) + ", expected " +
                            shape_string(p->value.shape()));
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    if (offset != expected_offset) throw CheckpointError("checkpoint offsets do not tile the blob");
    if (offset + p->value.size() > total) throw CheckpointError("checkpoint offsets exceed the blob");
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      p->value[k] = read_f32le(blob.data() + 4 * (offset + k));
    }
    expected_offset += p->value.size();
  }
  if (expected_offset != total) throw CheckpointError("checkpoint offsets do not tile the blob");
  return model;
}

std::vector<std::string> checkpoint_labels(const fs::path& path) {
  fs::path json_path = checkpoint_stem(path);
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw CheckpointError("cannot open checkpoint manifest " + json_path.string());
  try {
    nlohmann::json manifest;
    js >> manifest;
    if (!manifest.contains("labels")) return {};
    return manifest.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + json_path.string() + ": " + e.what());
  }
}

}  // namespace strfsed
