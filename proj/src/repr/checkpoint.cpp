#include "uld/repr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace uld::repr {

namespace {

constexpr char kMagic[8] = {'U', 'L', 'D', 'C', 'K', 'P', 'T', '\n'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

}  // namespace

const Tensor::Matrix& Checkpoint::at(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a.value;
  throw CheckpointError("checkpoint: missing array '" + name + "'");
}

void Checkpoint::load_into(const std::vector<NamedTensor>& dst) const {
  std::unordered_map<std::string, const Tensor::Matrix*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a.value;
  for (const auto& [name, tensor] : dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: missing array '" + name + "'");
    const auto& src = *it->second;
    if (src.rows() != tensor.rows() || src.cols() != tensor.cols())
      throw CheckpointError("checkpoint: array '" + name + "' is " + std::to_string(src.rows()) + "x" +
                            std::to_string(src.cols()) + ", expected " + shape_str(tensor.shape()));
    Tensor t = tensor;
    t.value() = src;
  }
}

std::vector<CheckpointArray> snapshot(const std::vector<NamedTensor>& tensors) {
  std::vector<CheckpointArray> out;
  out.reserve(tensors.size());
  for (const auto& [name, t] : tensors) out.push_back({name, t.value()});
  return out;
}

void write_checkpoint(const std::filesystem::path& path, nlohmann::json manifest,
                      const std::vector<CheckpointArray>& arrays) {
  manifest["format_version"] = kCheckpointVersion;
  auto& listing = manifest["arrays"] = nlohmann::json::array();
  for (const auto& a : arrays) listing.push_back({{"name", a.name}, {"rows", a.value.rows()}, {"cols", a.value.cols()}});
  const std::string text = manifest.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open " + tmp.string() + " for writing");
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : arrays)
      out.write(reinterpret_cast<const char*>(a.value.data()),
                static_cast<std::streamsize>(a.value.size() * sizeof(double)));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) throw CheckpointError("checkpoint: corrupt manifest length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));

  Checkpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  const int version = ck.manifest.value("format_version", -1);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  for (const auto& entry : ck.manifest.at("arrays")) {
    CheckpointArray a;
    a.name = entry.at("name");
    const Index rows = entry.at("rows"), cols = entry.at("cols");
    a.value.resize(rows, cols);
    in.read(reinterpret_cast<char*>(a.value.data()),
            static_cast<std::streamsize>(a.value.size() * sizeof(double)));
    if (!in) throw CheckpointError("checkpoint: truncated data for '" + a.name + "'");
    ck.arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw CheckpointError("checkpoint: trailing bytes after last array");
  return ck;
}

void save_encoder(const std::filesystem::path& path, const EncoderStack& stack) {
  write_checkpoint(path, {{"kind", "encoder"}, {"dims", stack.dims().to_json()}},
                   snapshot(stack.named_arrays()));
}

EncoderStack load_encoder(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  std::mt19937_64 unused(0);
  EncoderStack stack(EncoderDims::from_json(ck.manifest.at("dims")), unused);
  ck.load_into(stack.named_arrays());
  return stack;
}

}  // namespace uld::repr
