#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "algcp/grid.hpp"

namespace algcp {

/**
 * ESRI ASCII grid (.asc) reader/writer.
 *
 * Header keys are matched case-insensitively; both `xllcorner/yllcorner` and
 * `xllcenter/yllcenter` are accepted (centers are shifted to corners). Data
 * rows are stored north-to-south in the file and converted to this library's
 * south-to-north row-major layout. Values are written with 17 significant
 * digits so that write/read round-trips are bit-exact.
 */
inline Raster read_ascii_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("missing_input", "cannot open raster " + path);

  GridSpec spec;
  double nodata = -9999.0;
  bool have_nodata = false;
  bool x_is_center = false, y_is_center = false;

  std::string key;
  int header_fields = 0;
  while (header_fields < 5 || in.peek() != EOF) {
    std::streampos before = in.tellg();
    if (!(in >> key)) fail("parse_error", path + ": truncated header");
    std::string lower = key;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "ncols") {
      in >> spec.ncols;
      ++header_fields;
    } else if (lower == "nrows") {
      in >> spec.nrows;
      ++header_fields;
    } else if (lower == "xllcorner" || lower == "xllcenter") {
      in >> spec.x_origin;
      x_is_center = (lower == "xllcenter");
      ++header_fields;
    } else if (lower == "yllcorner" || lower == "yllcenter") {
      in >> spec.y_origin;
      y_is_center = (lower == "yllcenter");
      ++header_fields;
    } else if (lower == "cellsize") {
      in >> spec.cell_size;
      ++header_fields;
    } else if (lower == "nodata_value") {
      in >> nodata;
      have_nodata = true;
    } else {
      // First non-header token is the first data value; rewind and stop.
      in.clear();
      in.seekg(before);
      break;
    }
    if (!in) fail("parse_error", path + ": malformed header near '" + key + "'");
  }
  require(header_fields >= 5, "parse_error", path + ": incomplete .asc header");
  if (x_is_center) spec.x_origin -= 0.5 * spec.cell_size;
  if (y_is_center) spec.y_origin -= 0.5 * spec.cell_size;
  spec.validate();

  Raster out(spec);
  for (int file_row = 0; file_row < spec.nrows; ++file_row) {
    const int row = spec.nrows - 1 - file_row;  // file rows run north to south
    for (int col = 0; col < spec.ncols; ++col) {
      double v;
      if (!(in >> v)) fail("parse_error", path + ": truncated data section");
      const std::size_t i = spec.index(col, row);
      if (have_nodata && v == nodata) {
        out.missing[i] = 1;
        out.values[i] = 0.0;
      } else {
        out.values[i] = v;
      }
    }
  }
  return out;
}

inline void write_ascii_grid(const std::string& path, const Raster& r,
                             double nodata = -9999.0) {
  std::ofstream out(path);
  if (!out) fail("io_error", "cannot write raster " + path);
  char buf[64];
  out << "ncols " << r.spec.ncols << "\n";
  out << "nrows " << r.spec.nrows << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", r.spec.x_origin);
  out << "xllcorner " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", r.spec.y_origin);
  out << "yllcorner " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", r.spec.cell_size);
  out << "cellsize " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", nodata);
  out << "NODATA_value " << buf << "\n";
  for (int file_row = 0; file_row < r.spec.nrows; ++file_row) {
    const int row = r.spec.nrows - 1 - file_row;
    for (int col = 0; col < r.spec.ncols; ++col) {
      const std::size_t i = r.spec.index(col, row);
      std::snprintf(buf, sizeof buf, "%.17g", r.missing[i] ? nodata : r.values[i]);
      out << buf << (col + 1 == r.spec.ncols ? "\n" : " ");
    }
  }
  if (!out) fail("io_error", "failed while writing " + path);
}

}  // namespace algcp
