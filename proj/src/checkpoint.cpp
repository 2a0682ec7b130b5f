#include "gmfv/checkpoint_io.hpp"

#include <cstring>
#include <fstream>

namespace gmfv {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

void read_exact(std::ifstream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
}

}  // namespace

void write_tensor_container(const std::vector<NamedTensor>& tensors,
                            const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
  os.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : tensors) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(t.name.size());
    os.write(reinterpret_cast<const char*>(&name_len), 4);
    os.write(t.name.data(), name_len);
    os.write(reinterpret_cast<const char*>(&t.rank), 1);
    const char pad[3] = {0, 0, 0};
    os.write(pad, 3);
    os.write(reinterpret_cast<const char*>(t.dims.data()), 4u * t.rank);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("write failed: " + path.string());
}

std::vector<NamedTensor> read_tensor_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open for reading: " + path.string());
  char magic[4];
  read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad checkpoint magic in " + path.string());
  std::uint32_t version = 0;
  read_exact(is, &version, 4, "version");
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::uint32_t count = 0;
  read_exact(is, &count, 4, "entry count");

  std::vector<NamedTensor> tensors(count);
  for (auto& t : tensors) {
    std::uint32_t name_len = 0;
    read_exact(is, &name_len, 4, "name length");
    t.name.resize(name_len);
    read_exact(is, t.name.data(), name_len, "name");
    read_exact(is, &t.rank, 1, "rank");
    if (t.rank < 1 || t.rank > 3)
      throw CheckpointError("bad tensor rank in entry '" + t.name + "'");
    char pad[3];
    read_exact(is, pad, 3, "padding");
    read_exact(is, t.dims.data(), 4u * t.rank, "dims");
    std::uint64_t n = 1;
    for (std::uint8_t i = 0; i < t.rank; ++i) n *= t.dims[i];
    t.data.resize(n);
    if (n > 0) read_exact(is, t.data.data(), n * sizeof(float), "payload");
  }
  return tensors;
}

}  // namespace gmfv
