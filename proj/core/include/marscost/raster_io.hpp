#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "marscost/sim.hpp"

namespace marscost::io {

struct GrayRaster {
  int rows = 0;
  int cols = 0;
  int maxval = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

/// Reads P2 (ASCII) or P5 (binary, 8- or 16-bit big-endian) graymaps.
GrayRaster read_pgm(const std::filesystem::path& path);
void write_pgm_ascii(const std::filesystem::path& path, const GrayRaster& raster);

/// P1 bitmap; `bits` row-major, nonzero = set.
std::vector<unsigned char> read_pbm(const std::filesystem::path& path, int& rows, int& cols);
void write_pbm_ascii(const std::filesystem::path& path, int rows, int cols, const std::vector<unsigned char>& bits);

/// 8-bit binary P6 colour image.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);
double parse_double(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

/// Writes to `<path>.tmp` then renames over `path`, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// `dir/stem.meta.json` for `dir/stem.ext`.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace marscost::io
