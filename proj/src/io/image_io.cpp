#include "cloudtomo/io/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "cloudtomo/core/error.hpp"

namespace cloudtomo::io {

void write_pfm(const std::string& path, const optics::HdrImage& image) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "PF\n" << image.width << " " << image.height << "\n-1.0\n";
  // Bottom-up rows, interleaved RGB.
  std::vector<float> row(size_t(image.width) * 3);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) row[size_t(x) * 3 + c] = image.at(c, y, x);
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * 4));
  }
  require(out.good(), ErrorCode::io, "short write: " + path);
}

optics::HdrImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read " + path);
  std::string magic;
  in >> magic;
  require(magic == "PF", ErrorCode::format, "not a color PFM: " + path);
  int w = 0, h = 0;
  double scale = 0;
  in >> w >> h >> scale;
  require(w > 0 && h > 0, ErrorCode::corrupt_file, "bad PFM dims: " + path);
  require(scale < 0, ErrorCode::format, "big-endian PFM unsupported: " + path);
  in.get();  // single whitespace after the scale
  optics::HdrImage img(w, h);
  std::vector<float> row(size_t(w) * 3);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * 4));
    require(in.gcount() == std::streamsize(row.size() * 4), ErrorCode::corrupt_file,
            "truncated PFM: " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[size_t(x) * 3 + c];
  }
  return img;
}

namespace {

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

void png_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_be32(head, uint32_t(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!payload.empty())
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
  uint32_t crc = crc32(0, nullptr, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty()) crc = crc32(crc, payload.data(), uInt(payload.size()));
  std::vector<uint8_t> tail;
  put_be32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_rgb8_raw(const std::string& path, int width, int height,
                        const std::vector<uint8_t>& rgb) {
  require(rgb.size() == size_t(width) * height * 3, ErrorCode::invalid_argument,
          "png payload size mismatch");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, uint32_t(width));
  put_be32(ihdr, uint32_t(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(out, "IHDR", ihdr);

  // Filter byte 0 per scanline, then one zlib stream.
  std::vector<uint8_t> raw;
  raw.reserve(size_t(height) * (size_t(width) * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.begin() + size_t(y) * width * 3,
               rgb.begin() + size_t(y + 1) * width * 3);
  }
  uLongf comp_cap = compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(comp_cap);
  require(compress2(comp.data(), &comp_cap, raw.data(), uLong(raw.size()), 6) == Z_OK,
          ErrorCode::runtime, "zlib compression failed");
  comp.resize(comp_cap);
  png_chunk(out, "IDAT", comp);
  png_chunk(out, "IEND", {});
  require(out.good(), ErrorCode::io, "short write: " + path);
}

void write_png_rgb8(const std::string& path, const optics::HdrImage& image) {
  std::vector<uint8_t> rgb(size_t(image.width) * image.height * 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        rgb[(size_t(y) * image.width + x) * 3 + c] = uint8_t(std::lround(v * 255.0f));
      }
  write_png_rgb8_raw(path, image.width, image.height, rgb);
}

}  // namespace cloudtomo::io
