#include "restorer/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

namespace restorer::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'S', 'T', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V take(std::ifstream& in, const std::filesystem::path& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V)))
    throw CheckpointError(fmt::format("{}: truncated checkpoint", path.string()));
  return v;
}

template <typename T>
void put_tensor(std::ofstream& out, const Tensor<T>& t) {
  put<std::uint8_t>(out, std::is_same_v<T, float> ? 0 : 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

template <typename T>
Tensor<T> take_tensor(std::ifstream& in, const std::filesystem::path& path, Shape shape) {
  Tensor<T> t(std::move(shape));
  if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T))))
    throw CheckpointError(fmt::format("{}: truncated tensor data", path.string()));
  return t;
}

}  // namespace

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

template <typename T>
const Tensor<T>& Checkpoint::get(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw CheckpointError("checkpoint has no tensor named " + name);
  const auto* t = std::get_if<Tensor<T>>(e);
  if (!t) throw CheckpointError("checkpoint tensor " + name + " has a different dtype");
  return *t;
}

template const Tensor<float>& Checkpoint::get<float>(const std::string&) const;
template const Tensor<double>& Checkpoint::get<double>(const std::string&) const;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("{}: cannot open for writing", tmp.string()));
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    const std::string header = ckpt.header.dump();
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, entry] : ckpt.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      std::visit([&](const auto& t) { put_tensor(out, t); }, entry);
    }
    if (!out.flush()) throw CheckpointError(fmt::format("{}: write failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(fmt::format("{}: cannot open checkpoint", path.string()));
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw CheckpointError(fmt::format("{}: not a checkpoint file", path.string()));
  const auto version = take<std::uint32_t>(in, path);
  if (version != kVersion) throw CheckpointError(fmt::format("{}: unsupported version {}", path.string(), version));
  Checkpoint ckpt;
  const auto header_len = take<std::uint64_t>(in, path);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw CheckpointError(fmt::format("{}: truncated header", path.string()));
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(fmt::format("{}: bad header: {}", path.string(), e.what()));
  }
  const auto count = take<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError(fmt::format("{}: truncated name", path.string()));
    const auto dtype = take<std::uint8_t>(in, path);
    const auto rank = take<std::uint32_t>(in, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(take<std::uint64_t>(in, path));
    if (dtype == 0)
      ckpt.add(std::move(name), take_tensor<float>(in, path, std::move(shape)));
    else if (dtype == 1)
      ckpt.add(std::move(name), take_tensor<double>(in, path, std::move(shape)));
    else
      throw CheckpointError(fmt::format("{}: unknown dtype {} for {}", path.string(), dtype, name));
  }
  return ckpt;
}

}  // namespace restorer::nn
