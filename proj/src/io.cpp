#include "fieldkf/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fieldkf::io {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

/// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw IoError(path.string() + ": truncated PGM header");
  return tok;
}

long pgm_int(std::istream& in, const fs::path& path) {
  const std::string tok = pgm_token(in, path);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw IoError(path.string() + ": bad PGM header value '" + tok + "'");
  return v;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

PgmImage read_pgm(const fs::path& path) {
  std::ifstream in = open_in(path);
  const std::string magic = pgm_token(in, path);
  if (magic != "P5" && magic != "P2") throw IoError(path.string() + ": not a PGM file (magic '" + magic + "')");
  PgmImage img;
  img.cols = pgm_int(in, path);
  img.rows = pgm_int(in, path);
  img.maxval = static_cast<int>(pgm_int(in, path));
  if (img.rows <= 0 || img.cols <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw IoError(path.string() + ": invalid PGM dimensions or maxval");
  const std::size_t n = static_cast<std::size_t>(img.rows * img.cols);
  img.data.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const long v = pgm_int(in, path);
      if (v < 0 || v > img.maxval) throw IoError(path.string() + ": sample out of range");
      img.data[i] = static_cast<std::uint16_t>(v);
    }
    return img;
  }
  const bool wide = img.maxval > 255;
  std::vector<unsigned char> raw(n * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path.string() + ": truncated PGM data");
  for (std::size_t i = 0; i < n; ++i)
    img.data[i] = wide ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
  return img;
}

void write_pgm(const fs::path& path, const PgmImage& img, bool binary) {
  if (img.data.size() != static_cast<std::size_t>(img.rows * img.cols)) throw IoError("PGM buffer size mismatch");
  std::ofstream out = open_out(path);
  out << (binary ? "P5" : "P2") << "\n" << img.cols << " " << img.rows << "\n" << img.maxval << "\n";
  if (!binary) {
    for (Index r = 0; r < img.rows; ++r) {
      for (Index c = 0; c < img.cols; ++c) out << (c ? " " : "") << img.data[static_cast<std::size_t>(r * img.cols + c)];
      out << "\n";
    }
  } else {
    const bool wide = img.maxval > 255;
    std::vector<unsigned char> raw(img.data.size() * (wide ? 2 : 1));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      if (wide) {
        raw[2 * i] = static_cast<unsigned char>(img.data[i] >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(img.data[i] & 0xff);
      } else {
        raw[i] = static_cast<unsigned char>(img.data[i]);
      }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

RowMatrixX<double> pgm_to_unit(const PgmImage& img) {
  RowMatrixX<double> out(img.rows, img.cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = img.data[static_cast<std::size_t>(i)] / double(img.maxval);
  return out;
}

PgmImage unit_to_pgm(const RowMatrixX<double>& values, int maxval) {
  PgmImage img;
  img.rows = values.rows();
  img.cols = values.cols();
  img.maxval = maxval;
  img.data.resize(static_cast<std::size_t>(values.size()));
  for (Index i = 0; i < values.size(); ++i) {
    const double v = std::clamp(values.data()[i], 0.0, 1.0);
    img.data[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::lround(v * maxval));
  }
  return img;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(std::string_view token) {
  const std::string t = trim(token);
  double v = 0;
  const char* b = t.data();
  if (!t.empty() && t.front() == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) throw IoError("not a number: '" + t + "'");
  return v;
}

Index CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Index>(i);
  return -1;
}

CsvTable read_csv(const fs::path& path, std::vector<std::string>* issues) {
  auto fail = [&](std::size_t line, const std::string& msg) {
    const std::string text = path.string() + ":" + std::to_string(line) + ": " + msg;
    if (!issues) throw IoError(text);
    issues->push_back(text);
  };
  std::ifstream in(path);
  if (!in) {
    fail(0, "cannot open file");
    return {};
  }
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (table.header.empty()) {
      table.header = split(line, ',');
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != table.header.size()) {
      fail(lineno, "expected " + std::to_string(table.header.size()) + " fields, got " + std::to_string(cells.size()));
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    bool ok = true;
    for (const auto& c : cells) {
      try {
        row.push_back(parse_double(c));
      } catch (const IoError& e) {
        fail(lineno, e.what());
        ok = false;
        break;
      }
    }
    if (ok) table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) fail(lineno, "missing header row");
  return table;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::string text;
  for (std::size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
  text += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ",";
      text += format_double(row[i]);
    }
    text += "\n";
  }
  write_text(path, text);
}

void write_kernel(const fs::path& path, const StationaryKernel<double>& kernel) {
  if (kernel.is_white()) throw IoError("white kernels have no lag samples to write");
  std::ostringstream hdr;
  hdr << "fieldkf-kernel 1\n"
      << "half_rows " << kernel.half_rows() << "\n"
      << "half_cols " << kernel.half_cols() << "\n"
      << "pitch_row " << format_double(kernel.pitch_row()) << "\n"
      << "pitch_col " << format_double(kernel.pitch_col()) << "\n"
      << "channels " << kernel.channels() << "\n"
      << "data\n";
  std::ofstream out = open_out(path);
  const std::string h = hdr.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& lag : kernel.lags())
    for (Index a = 0; a < lag.rows(); ++a)
      for (Index b = 0; b < lag.cols(); ++b) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(lag(a, b));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
      }
  if (!out) throw IoError("failed writing " + path.string());
}

StationaryKernel<double> read_kernel(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "fieldkf-kernel 1") throw IoError(path.string() + ": not a kernel file");
  Index hr = -1, hc = -1, m = -1;
  double pr = 0, pc = 0;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t == "data") break;
    std::istringstream ss(t);
    std::string key, value;
    ss >> key >> value;
    if (key == "half_rows") hr = static_cast<Index>(parse_double(value));
    else if (key == "half_cols") hc = static_cast<Index>(parse_double(value));
    else if (key == "pitch_row") pr = parse_double(value);
    else if (key == "pitch_col") pc = parse_double(value);
    else if (key == "channels") m = static_cast<Index>(parse_double(value));
    else throw IoError(path.string() + ": unknown kernel header key '" + key + "'");
  }
  if (hr < 0 || hc < 0 || m <= 0) throw IoError(path.string() + ": incomplete kernel header");
  const std::size_t count = static_cast<std::size_t>((2 * hr + 1) * (2 * hc + 1));
  std::vector<MatrixX<double>> lags(count, MatrixX<double>(m, m));
  for (auto& lag : lags)
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b) {
        std::uint64_t bits = 0;
        in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
        if (!in) throw IoError(path.string() + ": truncated kernel data");
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        lag(a, b) = std::bit_cast<double>(bits);
      }
  return StationaryKernel<double>::sampled(hr, hc, pr, pc, std::move(lags));
}

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fieldkf::io
