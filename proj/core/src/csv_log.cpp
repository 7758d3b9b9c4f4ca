#include "dualfete/csv_log.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace dualfete::train {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string render_csv(std::span<const metrics::MetricsRecord> history) {
  std::string out;
  for (std::size_t i = 0; i < kLogColumns.size(); ++i) {
    if (i) out += ',';
    out += kLogColumns[i];
  }
  out += '\n';
  for (const auto& rec : history) {
    out += std::to_string(rec.step);
    for (std::size_t i = 1; i < kLogColumns.size(); ++i) {
      out += ',';
      const auto it = rec.values.find(std::string(kLogColumns[i]));
      if (it != rec.values.end()) out += format_double(it->second);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, std::span<const metrics::MetricsRecord> history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << render_csv(history);
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  auto line = [&f](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) f << (i ? "," : "") << cells[i];
    f << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

}  // namespace dualfete::train
