#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "dualfete/error.hpp"
#include "dualfete/segnet.hpp"

namespace dualfete::segnet {
namespace {

constexpr std::array<char, 4> kMagic{'D', 'F', 'T', 'E'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(buf.data(), buf.size());
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw std::runtime_error("checkpoint: unexpected end of file");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    DUALFETE_REQUIRE(name.size() <= 0xFFFF, "checkpoint: tensor name too long");
    DUALFETE_REQUIRE(t.rank() <= 0xFF, "checkpoint: tensor rank too large");
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = get_le<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is);
  ModelParams params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rank = get_le<std::uint8_t>(is);
    autograd::Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(is);
    std::vector<double> data(autograd::numel(shape));
    for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    params.insert(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

}  // namespace dualfete::segnet
