#include "contour_adapt/pgm.hpp"

#include <fstream>
#include <limits>

#include "contour_adapt/errors.hpp"

namespace ca::data {
namespace {

// Skips whitespace and '#' comment lines, then parses one decimal field.
int read_header_int(std::istream& is, const std::string& path, const char* what) {
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      c = is.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) {
    throw FormatError("'" + path + "': malformed PGM header (expected " + std::string(what) + ")");
  }
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > std::numeric_limits<int>::max()) {
      throw FormatError("'" + path + "': PGM " + what + " out of range");
    }
    c = is.get();
  }
  if (c == EOF) throw FormatError("'" + path + "': truncated PGM header");
  return static_cast<int>(v);
}

}  // namespace

PgmImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[2] = {0, 0};
  is.read(magic, 2);
  if (is.gcount() != 2 || magic[0] != 'P' || magic[1] != '5') {
    throw FormatError("'" + path + "': not a binary PGM (P5) file");
  }
  PgmImage img;
  img.width = read_header_int(is, path, "width");
  img.height = read_header_int(is, path, "height");
  int maxval = read_header_int(is, path, "maxval");
  if (img.width < 1 || img.height < 1) {
    throw FormatError("'" + path + "': invalid PGM dimensions");
  }
  if (maxval != 255) {
    throw FormatError("'" + path + "': unsupported PGM maxval " + std::to_string(maxval) +
                      " (only 255)");
  }
  // The header int parser consumed exactly one whitespace byte after maxval.
  std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError("'" + path + "': truncated PGM pixel data");
  }
  return img;
}

void write_pgm(const std::string& path, const PgmImage& img) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw ContractError("write_pgm: inconsistent image dimensions");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace ca::data
