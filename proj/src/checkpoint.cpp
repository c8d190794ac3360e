#include "pfd/checkpoint.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace pfd::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'P', 'F', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint truncated");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) throw IoError("checkpoint string length implausible");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("checkpoint truncated");
  return s;
}

}  // namespace

const Mat* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void Checkpoint::copy_into(const std::string& name, Mat& dst) const {
  const Mat* src = find(name);
  if (src == nullptr) throw ContractError(fmt::format("checkpoint has no tensor '{}'", name));
  if (src->rows() != dst.rows() || src->cols() != dst.cols()) {
    throw ContractError(fmt::format("checkpoint tensor '{}' is {}x{}, expected {}x{}", name,
                                    src->rows(), src->cols(), dst.rows(), dst.cols()));
  }
  dst = *src;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write checkpoint {}", path.string()));
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, ckpt.version);
  put_string(os, ckpt.config_digest);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_string(os, t.name);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(t.value.cols()));
    os.write(reinterpret_cast<const char*>(t.value.data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!os) throw IoError(fmt::format("checkpoint write failed: {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw IoError(fmt::format("{}: not a checkpoint", path.string()));
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(is);
  if (ckpt.version != kCheckpointVersion) {
    throw IoError(fmt::format("{}: unsupported checkpoint version {}", path.string(), ckpt.version));
  }
  ckpt.config_digest = get_string(is);
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_string(is);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows * cols > (1ull << 32)) throw IoError("checkpoint tensor too large");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated");
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace pfd::nn
