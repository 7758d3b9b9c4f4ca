#include "dualfete/dataset_io.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>

#include "dualfete/error.hpp"

namespace dualfete::data {
namespace {

using nlohmann::json;

Split parse_split(const std::string& s) {
  if (s == "labeled") return Split::Labeled;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "test") return Split::Test;
  throw std::runtime_error("dataset manifest: unknown split '" + s + "'");
}

std::vector<char> read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Test: return "test";
  }
  return "unknown";
}

void export_dataset(const std::filesystem::path& dir, const std::vector<ExportedSample>& samples,
                    std::size_t num_classes) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["h"] = samples.empty() ? 0 : samples.front().sample.height;
  manifest["w"] = samples.empty() ? 0 : samples.front().sample.width;
  manifest["classes"] = num_classes;
  manifest["samples"] = json::array();
  for (const auto& [s, split] : samples) {
    const std::string img = "img_" + std::to_string(s.id) + ".f32";
    const std::string lbl = "lbl_" + std::to_string(s.id) + ".u8";
    {
      std::ofstream os(dir / img, std::ios::binary | std::ios::trunc);
      for (double v : s.image) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                               static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
        os.write(bytes, 4);
      }
    }
    {
      std::ofstream os(dir / lbl, std::ios::binary | std::ios::trunc);
      os.write(reinterpret_cast<const char*>(s.label.data()), static_cast<std::streamsize>(s.label.size()));
    }
    manifest["samples"].push_back({{"id", s.id}, {"image", img}, {"label", lbl}, {"split", split_name(split)}});
  }
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  os << manifest.dump(2) << '\n';
}

std::vector<ExportedSample> import_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("dataset: missing manifest.json in " + dir.string());
  const json manifest = json::parse(is);
  const auto h = manifest.at("h").get<std::size_t>();
  const auto w = manifest.at("w").get<std::size_t>();
  const auto classes = manifest.at("classes").get<std::size_t>();
  std::vector<ExportedSample> out;
  for (const auto& entry : manifest.at("samples")) {
    ExportedSample es;
    es.sample.id = entry.at("id").get<std::int64_t>();
    es.sample.height = h;
    es.sample.width = w;
    es.split = parse_split(entry.at("split").get<std::string>());
    const auto img = read_file(dir / entry.at("image").get<std::string>());
    if (img.size() != 4 * h * w) throw std::runtime_error("dataset: image size mismatch for sample " + std::to_string(es.sample.id));
    es.sample.image.resize(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(img[4 * i + b])) << (8 * b);
      es.sample.image[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    const auto lbl = read_file(dir / entry.at("label").get<std::string>());
    if (lbl.size() != h * w) throw std::runtime_error("dataset: label size mismatch for sample " + std::to_string(es.sample.id));
    es.sample.label.assign(lbl.begin(), lbl.end());
    for (auto v : es.sample.label)
      if (v >= classes) throw std::runtime_error("dataset: label value out of range in sample " + std::to_string(es.sample.id));
    out.push_back(std::move(es));
  }
  return out;
}

}  // namespace dualfete::data
