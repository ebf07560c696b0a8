#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "docent/encoder/model.hpp"
#include "docent/numerics/errors.hpp"
#include "docent/text/io.hpp"

namespace docent {

inline constexpr const char* kCheckpointFormat = "docent-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},         {"heads", c.heads},
          {"hidden", c.hidden},         {"ffn_hidden", c.ffn_hidden},
          {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
          {"entity_count", c.entity_count}, {"entity_dim", c.entity_dim},
          {"variant", to_string(c.variant)}, {"init_std", c.init_std}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.entity_count = j.at("entity_count").get<std::size_t>();
  c.entity_dim = j.at("entity_dim").get<std::size_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.init_std = j.value("init_std", 0.02);
  c.validate();
  return c;
}

struct Checkpoint {
  Model<float> model;
  Vocabulary vocab;
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  }
}

inline void write_floats(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const float f : t.storage()) {
    const std::uint32_t le = to_little_endian(std::bit_cast<std::uint32_t>(f));
    out.write(reinterpret_cast<const char*>(&le), sizeof le);
  }
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

inline Tensor<float> read_floats(const std::filesystem::path& path, const Shape& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  Tensor<float> t(shape);
  const auto bytes = static_cast<std::uintmax_t>(t.size()) * 4;
  if (std::filesystem::file_size(path) != bytes) {
    throw DataError("'" + path.string() + "' holds " +
                    std::to_string(std::filesystem::file_size(path)) + " bytes, expected " +
                    std::to_string(bytes) + " for " + shape_string(shape));
  }
  for (auto& f : t.storage()) {
    std::uint32_t le = 0;
    in.read(reinterpret_cast<char*>(&le), sizeof le);
    f = std::bit_cast<float>(to_little_endian(le));
  }
  return t;
}

}  // namespace detail

/// Directory layout: manifest.json, vocab.tsv, tensors/<name>.bin (raw
/// little-endian float32, row-major).
inline void save_checkpoint(const std::string& dir, const Model<float>& model,
                            const Vocabulary& vocab) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "tensors");
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : model.params) {
    const std::string file = "tensors/" + name + ".bin";
    detail::write_floats(fs::path(dir) / file, t);
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"file", file}});
  }
  nlohmann::json manifest{{"format", kCheckpointFormat},
                          {"version", kCheckpointVersion},
                          {"dtype", "float32"},
                          {"config", config_to_json(model.config)},
                          {"tensors", tensors},
                          {"entities", vocab.entity_ids()}};
  io::write_vocab((fs::path(dir) / "vocab.tsv").string(), vocab);
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
}

/// Loads and checks every tensor against the shapes the config implies.
inline Checkpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  nlohmann::json manifest;
  {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw DataError("no manifest.json in '" + dir + "'");
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed manifest in '" + dir + "': " + e.what());
    }
  }
  Checkpoint ck;
  try {
    if (manifest.at("format") != kCheckpointFormat) throw DataError("not a docent checkpoint");
    if (manifest.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version");
    }
    if (manifest.at("dtype") != "float32") throw DataError("unsupported dtype");
    ck.model.config = config_from_json(manifest.at("config"));
    const auto expected = parameter_shapes(ck.model.config);
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      auto it = expected.find(name);
      if (it == expected.end()) throw DataError("unexpected tensor '" + name + "'");
      if (it->second != shape) {
        throw DataError("tensor '" + name + "' has shape " + shape_string(shape) +
                        ", config implies " + shape_string(it->second));
      }
      ck.model.params.emplace(
          name, detail::read_floats(fs::path(dir) / entry.at("file").get<std::string>(), shape));
    }
    for (const auto& [name, shape] : expected) {
      if (!ck.model.params.count(name)) throw DataError("missing tensor '" + name + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in '" + dir + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid checkpoint config: ") + e.what());
  }
  ck.vocab = io::read_vocab((fs::path(dir) / "vocab.tsv").string());
  const auto& c = ck.model.config;
  const std::size_t expect_vocab =
      c.variant == Variant::full ? ck.vocab.size() : ck.vocab.word_block_size();
  if (expect_vocab != c.vocab_size || ck.vocab.entity_count() != c.entity_count) {
    throw DataError("vocabulary does not match checkpoint config");
  }
  return ck;
}

}  // namespace docent
