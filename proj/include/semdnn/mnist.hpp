#pragma once
#include <cstdint>
#include <fstream>
#include <string>

#include "semdnn/data.hpp"

namespace semdnn {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path + ": truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// Big-endian IDX parser. Images: magic 0x00000803, then count/rows/cols and
// unsigned bytes; labels: magic 0x00000801. Pixels are scaled to [0,1].
inline Dataset load_mnist(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw FormatError(images_path + ": cannot open");
  if (detail::read_be32(fi, images_path) != 0x00000803u)
    throw FormatError(images_path + ": bad image magic");
  const std::uint32_t n = detail::read_be32(fi, images_path);
  const std::uint32_t rows = detail::read_be32(fi, images_path);
  const std::uint32_t cols = detail::read_be32(fi, images_path);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw FormatError(labels_path + ": cannot open");
  if (detail::read_be32(fl, labels_path) != 0x00000801u)
    throw FormatError(labels_path + ": bad label magic");
  const std::uint32_t nl = detail::read_be32(fl, labels_path);
  if (n != nl)
    throw FormatError("image/label count mismatch: " + std::to_string(n) + " vs " +
                      std::to_string(nl));

  Dataset d;
  d.h = static_cast<int>(rows);
  d.w = static_cast<int>(cols);
  std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!fi.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw FormatError(images_path + ": truncated image data");
    std::vector<double> img(buf.size());
    for (size_t p = 0; p < buf.size(); ++p) img[p] = buf[p] / 255.0;
    d.images.push_back(std::move(img));
    char lb;
    if (!fl.read(&lb, 1)) throw FormatError(labels_path + ": truncated label data");
    d.labels.push_back(static_cast<unsigned char>(lb));
  }
  d.validate();
  return d;
}

inline void save_idx(const Dataset& d, const std::string& images_path,
                     const std::string& labels_path) {
  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) throw FormatError(images_path + ": cannot open for write");
  detail::write_be32(fi, 0x00000803u);
  detail::write_be32(fi, static_cast<std::uint32_t>(d.size()));
  detail::write_be32(fi, static_cast<std::uint32_t>(d.h));
  detail::write_be32(fi, static_cast<std::uint32_t>(d.w));
  for (auto& img : d.images)
    for (double v : img) {
      const unsigned char b =
          static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      fi.write(reinterpret_cast<const char*>(&b), 1);
    }

  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) throw FormatError(labels_path + ": cannot open for write");
  detail::write_be32(fl, 0x00000801u);
  detail::write_be32(fl, static_cast<std::uint32_t>(d.size()));
  for (int l : d.labels) {
    const char b = static_cast<char>(l);
    fl.write(&b, 1);
  }
}

}  // namespace semdnn
