// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/tensor_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dpgm {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

std::string tensor_to_csv(const Tensor& t) {
  std::string out = "# shape:";
  for (auto d : t.shape()) out += " " + std::to_string(d);
  out += '\n';
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ',';
      append_double(out, t[r * cols + c]);
    }
    out += '\n';
  }
  return out;
}

Tensor tensor_from_csv(std::string_view text) {
  constexpr std::string_view kHeader = "# shape:";
  if (text.substr(0, kHeader.size()) != kHeader) {
    throw std::invalid_argument("csv: missing '# shape:' header");
  }
  const auto eol = text.find('\n');
  std::istringstream header(std::string(text.substr(kHeader.size(), eol - kHeader.size())));
  Shape shape;
  std::size_t d = 0;
  while (header >> d) shape.push_back(d);

  std::vector<double> values;
  std::string_view body = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
  while (!body.empty()) {
    const auto nl = body.find('\n');
    std::string_view line = body.substr(0, nl);
    body = nl == std::string_view::npos ? std::string_view{} : body.substr(nl + 1);
    line = trim(line);
    if (line.empty()) continue;
    while (true) {
      const auto comma = line.find(',');
      const std::string field(trim(line.substr(0, comma)));
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::invalid_argument("csv: bad number '" + field + "'");
      }
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_csv(const std::filesystem::path& path, const Tensor& t) {
  write_text_atomic(path, tensor_to_csv(t));
}

Tensor load_csv(const std::filesystem::path& path) { return tensor_from_csv(read_text(path)); }

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dpgm
