#pragma once

// File formats: Netpbm graymaps (P2 ASCII, P5 binary at 8 or 16 bits),
// numeric CSV with a header row, and binary noise-kernel files.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fieldkf/field.hpp"
#include "fieldkf/spectral.hpp"

namespace fieldkf::io {

struct PgmImage {
  Index rows = 0;
  Index cols = 0;
  int maxval = 65535;
  std::vector<std::uint16_t> data;  // row-major
};

/// Reads P2 or P5. 16-bit P5 samples are big-endian as Netpbm specifies.
PgmImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const PgmImage& img, bool binary = true);

/// Samples rescaled to [0, 1] (v / maxval).
RowMatrixX<double> pgm_to_unit(const PgmImage& img);
/// Values in [0, 1] quantized to round(v * maxval); out-of-range values are clamped.
PgmImage unit_to_pgm(const RowMatrixX<double>& values, int maxval = 65535);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);
/// Strict parse of a whole token; throws IoError naming the token.
double parse_double(std::string_view token);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column index by name, or -1.
  Index column(std::string_view name) const;
};

/// Reads a numeric CSV. With issues == nullptr the first problem throws
/// IoError ("file:line: ..."); otherwise problems are appended and bad
/// lines skipped.
CsvTable read_csv(const std::filesystem::path& path, std::vector<std::string>* issues = nullptr);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Kernel file: text header (half_rows, half_cols, pitch_row, pitch_col,
/// channels) followed by little-endian float64 lag samples, lags in
/// row-major lag order, each m x m block row-major.
void write_kernel(const std::filesystem::path& path, const StationaryKernel<double>& kernel);
StationaryKernel<double> read_kernel(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace fieldkf::io
