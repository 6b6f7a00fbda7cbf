#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "artic/core/hash.hpp"
#include "artic/nn/module.hpp"

namespace artic::model {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kCheckpointMagic[] = "ARTCKPT1\n";

/// Named module sections serialized into one checkpoint file, e.g.
/// {"encoder", &enc}, {"decoder", &dec} (+ {"cvae", &cvae} for s2s-v).
using ModuleSections = std::vector<std::pair<std::string, nn::Module*>>;

struct CheckpointMeta {
  std::string kind;     // cvae | s2s | s2s-v | segnet
  std::string subject;
  json configs;
  std::string corpus_hash;
  std::string content_hash;
};

namespace detail {

struct TensorRef {
  std::string name;
  Tensor* tensor;
};

inline std::vector<TensorRef> collect_tensors(const ModuleSections& sections) {
  std::vector<TensorRef> refs;
  for (const auto& [prefix, module] : sections) {
    for (auto& [name, p] : module->named_parameters())
      refs.push_back({prefix + "." + name, &p->value});
    for (auto& [name, b] : module->named_buffers())
      refs.push_back({prefix + "." + name, b});
  }
  return refs;
}

}  // namespace detail

/// Single binary file: magic, length-prefixed JSON metadata (kind, subject,
/// configs, corpus hash, tensor manifest, payload hash), then the raw
/// little-endian parameter/buffer payload in manifest order.
inline void save_checkpoint(const fs::path& path, const std::string& kind,
                            const std::string& subject, const json& configs,
                            const std::string& corpus_hash,
                            const ModuleSections& sections) {
  auto refs = detail::collect_tensors(sections);
  json manifest = json::array();
  std::string payload;
  for (const auto& r : refs) {
    manifest.push_back({{"name", r.name}, {"shape", r.tensor->shape()}});
    payload.append(reinterpret_cast<const char*>(r.tensor->data()),
                   static_cast<std::size_t>(r.tensor->numel()) * sizeof(real));
  }
  json meta{{"format_version", 1},
            {"kind", kind},
            {"subject", subject},
            {"configs", configs},
            {"corpus_hash", corpus_hash},
            {"tensors", manifest},
            {"content_hash", sha256_hex(payload)}};
  const std::string meta_s = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t len = meta_s.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("short write: " + path.string());
}

namespace detail {

inline json read_meta_json(std::ifstream& in, const fs::path& path) {
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string meta_s(len, '\0');
  in.read(meta_s.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint: " + path.string());
  return json::parse(meta_s);
}

}  // namespace detail

inline CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  json meta = detail::read_meta_json(in, path);
  CheckpointMeta out;
  meta.at("kind").get_to(out.kind);
  meta.at("subject").get_to(out.subject);
  out.configs = meta.at("configs");
  meta.at("corpus_hash").get_to(out.corpus_hash);
  meta.at("content_hash").get_to(out.content_hash);
  return out;
}

/// Restores parameters and buffers into freshly constructed modules; names
/// and shapes must match the file's manifest exactly.
inline CheckpointMeta load_checkpoint_into(const fs::path& path,
                                           const ModuleSections& sections) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  json meta = detail::read_meta_json(in, path);
  auto refs = detail::collect_tensors(sections);
  const json& manifest = meta.at("tensors");
  if (manifest.size() != refs.size())
    throw Error("checkpoint " + path.string() + ": tensor count mismatch (file " +
                std::to_string(manifest.size()) + ", model " +
                std::to_string(refs.size()) + ")");
  std::string payload;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::string name = manifest[i].at("name").get<std::string>();
    const std::vector<int> shape = manifest[i].at("shape").get<std::vector<int>>();
    if (name != refs[i].name)
      throw Error("checkpoint tensor name mismatch: file '" + name + "' vs model '" +
                  refs[i].name + "'");
    if (shape != refs[i].tensor->shape())
      throw Error("checkpoint shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(refs[i].tensor->data()),
            static_cast<std::streamsize>(refs[i].tensor->numel() * sizeof(real)));
    if (!in) throw IoError("truncated checkpoint payload: " + path.string());
    payload.append(reinterpret_cast<const char*>(refs[i].tensor->data()),
                   static_cast<std::size_t>(refs[i].tensor->numel()) * sizeof(real));
  }
  const std::string expect = meta.at("content_hash").get<std::string>();
  if (sha256_hex(payload) != expect)
    throw Error("checkpoint content hash mismatch: " + path.string());
  CheckpointMeta out;
  meta.at("kind").get_to(out.kind);
  meta.at("subject").get_to(out.subject);
  out.configs = meta.at("configs");
  meta.at("corpus_hash").get_to(out.corpus_hash);
  out.content_hash = expect;
  return out;
}

/// In-memory deep copy of all parameters and buffers (for best-epoch
/// selection during training).
inline std::vector<Tensor> snapshot_state(const ModuleSections& sections) {
  std::vector<Tensor> out;
  for (const auto& r : detail::collect_tensors(sections)) out.push_back(r.tensor->clone());
  return out;
}

inline void restore_state(const ModuleSections& sections,
                          const std::vector<Tensor>& snap) {
  auto refs = detail::collect_tensors(sections);
  if (refs.size() != snap.size()) throw Error("restore_state: size mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i)
    std::copy_n(snap[i].data(), snap[i].numel(), refs[i].tensor->data());
}

}  // namespace artic::model
