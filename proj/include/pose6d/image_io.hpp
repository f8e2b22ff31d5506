// Netpbm readers/writers: P6 PPM for color, P5 PGM for masks (0/255) and for
// depth (16-bit big-endian, 0.1 mm units).
#pragma once

#include <fstream>

#include "pose6d/common.hpp"

namespace pose6d {

using ColorImage = Image<std::array<float, 3>>;

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline void read_pnm_header(std::istream& in, const char* magic, int& w, int& h, int& maxval,
                            const std::string& path) {
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != magic[0] || m1 != magic[1]) throw DataError("bad magic in " + path);
  skip_pnm_space(in);
  if (!(in >> w)) throw DataError("bad width in " + path);
  skip_pnm_space(in);
  if (!(in >> h)) throw DataError("bad height in " + path);
  skip_pnm_space(in);
  if (!(in >> maxval)) throw DataError("bad maxval in " + path);
  in.get();  // single whitespace before raster
  if (w <= 0 || h <= 0) throw DataError("bad image size in " + path);
}

}  // namespace detail

inline void write_ppm(const ColorImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> row(size_t(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < 3; ++k)
        row[size_t(x) * 3 + k] = (unsigned char)std::clamp(
            int(std::lround(img.at(x, y)[k] * 255.0f)), 0, 255);
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw DataError("failed writing " + path);
}

inline ColorImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  int w, h, maxval;
  detail::read_pnm_header(in, "P6", w, h, maxval, path);
  if (maxval != 255) throw DataError("unsupported PPM maxval in " + path);
  ColorImage img(w, h);
  std::vector<unsigned char> row(size_t(w) * 3);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw DataError("truncated PPM " + path);
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) img.at(x, y)[k] = row[size_t(x) * 3 + k] / 255.0f;
  }
  return img;
}

inline void write_mask_pgm(const Image<uint8_t>& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<unsigned char> row(mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) row[x] = mask.at(x, y) ? 255 : 0;
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw DataError("failed writing " + path);
}

inline Image<uint8_t> read_mask_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  int w, h, maxval;
  detail::read_pnm_header(in, "P5", w, h, maxval, path);
  if (maxval != 255) throw DataError("unsupported PGM maxval in " + path);
  Image<uint8_t> mask(w, h);
  std::vector<unsigned char> row(w);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw DataError("truncated PGM " + path);
    for (int x = 0; x < w; ++x) mask.at(x, y) = row[x] > 127 ? 1 : 0;
  }
  return mask;
}

// Depth in meters <-> 16-bit big-endian PGM in 0.1 mm units (0 = no depth).
inline void write_depth_pgm(const Image<double>& depth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
  std::vector<unsigned char> row(size_t(depth.width) * 2);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      int v = std::clamp(int(std::lround(depth.at(x, y) * 10000.0)), 0, 65535);
      row[size_t(x) * 2] = (unsigned char)(v >> 8);
      row[size_t(x) * 2 + 1] = (unsigned char)(v & 0xff);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw DataError("failed writing " + path);
}

inline Image<double> read_depth_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  int w, h, maxval;
  detail::read_pnm_header(in, "P5", w, h, maxval, path);
  if (maxval != 65535) throw DataError("depth PGM must be 16-bit: " + path);
  Image<double> depth(w, h);
  std::vector<unsigned char> row(size_t(w) * 2);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw DataError("truncated PGM " + path);
    for (int x = 0; x < w; ++x) {
      int v = (int(row[size_t(x) * 2]) << 8) | int(row[size_t(x) * 2 + 1]);
      depth.at(x, y) = v / 10000.0;
    }
  }
  return depth;
}

}  // namespace pose6d
