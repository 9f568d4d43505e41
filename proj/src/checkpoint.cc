#include "moltailor/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace moltailor {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'R', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Entry {
  Shape shape;
  std::size_t offset = 0;
};

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const ModelConfig& cfg, const ParamStore& params) {
  json header;
  header["format_version"] = kFormatVersion;
  header["dtype"] = "float64";
  header["config"] = json::parse(config_to_json(cfg));
  header["config_hash"] = config_hash(cfg);
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : params.items()) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp);
    const std::uint64_t len = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : params.items())
      out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * 8));
    if (!out) throw CheckpointError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_tensor_file(dir / "model.ckpt", model.config(), model.params());
  model.text_vocab().save(dir / "text_vocab.txt");
  model.smiles_vocab().save(dir / "smiles_vocab.txt");
}

Model load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "model.ckpt";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(path.string() + ": not a checkpoint file");
  if (len > (1u << 26)) throw CheckpointError(path.string() + ": header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError(path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  if (header.value("format_version", 0) != kFormatVersion)
    throw CheckpointError(path.string() + ": unsupported format_version");
  if (header.value("dtype", "") != "float64") throw CheckpointError(path.string() + ": unsupported dtype");
  const ModelConfig cfg = config_from_json(header.at("config").dump());
  if (header.at("config_hash").get<std::uint64_t>() != config_hash(cfg))
    throw CheckpointError(path.string() + ": config hash mismatch");

  std::map<std::string, Entry> entries;
  std::size_t total = 0;
  for (const auto& t : header.at("tensors")) {
    Entry e{t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>()};
    total = std::max(total, e.offset + shape_size(e.shape));
    if (!entries.emplace(t.at("name").get<std::string>(), e).second)
      throw CheckpointError(path.string() + ": duplicate tensor name");
  }
  std::vector<double> blob(total);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(total * 8));
  if (!in) throw CheckpointError(path.string() + ": truncated tensor data");

  Model model(cfg, Vocab::load(dir / "text_vocab.txt"), Vocab::load(dir / "smiles_vocab.txt"), 0);
  if (model.params().items().size() != entries.size())
    throw CheckpointError(path.string() + ": tensor count does not match the config");
  for (auto& [name, t] : model.params().items()) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointError(path.string() + ": missing tensor " + name);
    if (it->second.shape != t.shape())
      throw CheckpointError(path.string() + ": shape mismatch for " + name + " (vocabulary files changed?)");
    Tensor dst = t;
    std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(it->second.offset), t.size(), dst.mutable_data().begin());
  }
  return model;
}

}  // namespace moltailor
