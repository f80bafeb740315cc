#include "marscost/raster_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace marscost::io {
namespace {

// Netpbm header tokenizer: whitespace separated, '#' comments to end of line.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])) && bytes_[pos_] != '#') {
      ++pos_;
    }
    if (start == pos_) throw FormatError("netpbm: unexpected end of header");
    return bytes_.substr(start, pos_ - start);
  }

  long integer() {
    const std::string t = token();
    long v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) throw FormatError("netpbm: bad integer '" + t + "'");
    return v;
  }

  // Exactly one whitespace byte separates the header from binary raster data.
  std::size_t binary_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("netpbm: missing separator before raster data");
    }
    return pos_ + 1;
  }

  // 1-bit ASCII bitmaps may pack digits without separators.
  int bit() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw FormatError("pbm: truncated raster");
    const char c = bytes_[pos_++];
    if (c != '0' && c != '1') throw FormatError("pbm: bad pixel");
    return c - '0';
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void check_dims(long rows, long cols) {
  if (rows < 1 || cols < 1 || rows > (1L << 20) || cols > (1L << 20)) {
    throw FormatError("netpbm: invalid dimensions");
  }
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.parent_path() / (path.stem().string() + ".meta.json");
}

GrayRaster read_pgm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  HeaderReader hdr(bytes);
  const std::string magic = hdr.token();
  if (magic != "P2" && magic != "P5") throw FormatError(path.string() + ": not a P2/P5 graymap");
  const long cols = hdr.integer();
  const long rows = hdr.integer();
  check_dims(rows, cols);
  const long maxval = hdr.integer();
  if (maxval < 1 || maxval > 65535) throw FormatError(path.string() + ": maxval must be in [1, 65535]");

  GrayRaster out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  out.maxval = static_cast<int>(maxval);
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  out.pixels.resize(n);

  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const long v = hdr.integer();
      if (v < 0 || v > maxval) throw FormatError(path.string() + ": pixel out of range");
      out.pixels[i] = static_cast<std::uint16_t>(v);
    }
  } else {
    std::size_t p = hdr.binary_start();
    const std::size_t width = maxval < 256 ? 1 : 2;
    if (bytes.size() < p + n * width) throw FormatError(path.string() + ": truncated raster");
    for (std::size_t i = 0; i < n; ++i) {
      unsigned v = static_cast<unsigned char>(bytes[p]);
      if (width == 2) v = (v << 8) | static_cast<unsigned char>(bytes[p + 1]);
      p += width;
      if (v > static_cast<unsigned>(maxval)) throw FormatError(path.string() + ": pixel out of range");
      out.pixels[i] = static_cast<std::uint16_t>(v);
    }
  }
  return out;
}

void write_pgm_ascii(const std::filesystem::path& path, const GrayRaster& raster) {
  if (raster.maxval < 1 || raster.maxval > 65535) throw ArgumentError("write_pgm_ascii: bad maxval");
  std::string s = "P2\n" + std::to_string(raster.cols) + " " + std::to_string(raster.rows) + "\n" +
                  std::to_string(raster.maxval) + "\n";
  for (int r = 0; r < raster.rows; ++r) {
    for (int c = 0; c < raster.cols; ++c) {
      if (c) s += ' ';
      s += std::to_string(raster.pixels[static_cast<std::size_t>(r) * raster.cols + c]);
    }
    s += '\n';
  }
  write_file_atomic(path, s);
}

std::vector<unsigned char> read_pbm(const std::filesystem::path& path, int& rows, int& cols) {
  const std::string bytes = read_file(path);
  HeaderReader hdr(bytes);
  if (hdr.token() != "P1") throw FormatError(path.string() + ": not a P1 bitmap");
  const long c = hdr.integer();
  const long r = hdr.integer();
  check_dims(r, c);
  rows = static_cast<int>(r);
  cols = static_cast<int>(c);
  std::vector<unsigned char> bits(static_cast<std::size_t>(r) * static_cast<std::size_t>(c));
  for (auto& b : bits) b = static_cast<unsigned char>(hdr.bit());
  return bits;
}

void write_pbm_ascii(const std::filesystem::path& path, int rows, int cols, const std::vector<unsigned char>& bits) {
  if (bits.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ArgumentError("write_pbm_ascii: size mismatch");
  }
  std::string s = "P1\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) s += ' ';
      s += bits[static_cast<std::size_t>(r) * cols + c] ? '1' : '0';
    }
    s += '\n';
  }
  write_file_atomic(path, s);
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::string s = "P6\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
  s.reserve(s.size() + img.pixels.size());
  for (double v : img.pixels) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    s += static_cast<char>(static_cast<unsigned char>(q));
  }
  write_file_atomic(path, s);
}

Image read_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  HeaderReader hdr(bytes);
  if (hdr.token() != "P6") throw FormatError(path.string() + ": not a P6 pixmap");
  const long cols = hdr.integer();
  const long rows = hdr.integer();
  check_dims(rows, cols);
  const long maxval = hdr.integer();
  if (maxval < 1 || maxval > 255) throw FormatError(path.string() + ": only 8-bit P6 is supported");
  std::size_t p = hdr.binary_start();
  Image img(static_cast<int>(rows), static_cast<int>(cols));
  if (bytes.size() < p + img.pixels.size()) throw FormatError(path.string() + ": truncated raster");
  for (double& v : img.pixels) v = static_cast<unsigned char>(bytes[p++]) / static_cast<double>(maxval);
  return img;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericError("format_double failed");
  return std::string(buf.data(), p);
}

double parse_double(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw FormatError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace marscost::io
