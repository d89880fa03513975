#include "mainet/media_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mainet/error.hpp"
#include "mainet/serialize.hpp"

namespace mainet::io {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t be32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void put_be32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

}  // namespace

WavData read_wav(const std::string& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DataFormatError(path + ": not a RIFF/WAVE file");

  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = le32(p + pos + 4);
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataFormatError(path + ": short fmt chunk");
      const std::uint16_t format = le16(p + pos + 8);
      if (format != 1) throw DataFormatError(path + ": only PCM WAV supported");
      channels = le16(p + pos + 10);
      rate = le32(p + pos + 12);
      bits = le16(p + pos + 22);
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      data = p + pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (!data || channels == 0 || rate == 0) throw DataFormatError(path + ": missing fmt/data chunk");
  if (bits != 16) throw DataFormatError(path + ": only 16-bit PCM supported");
  if (data + data_len > p + bytes.size()) throw DataFormatError(path + ": truncated data chunk");

  const std::size_t n = data_len / (2 * channels);
  Tensor out({channels, n});
  auto& ov = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(le16(data + (i * channels + c) * 2));
      ov[c * n + i] = static_cast<double>(raw) / 32768.0;
    }
  return {out, static_cast<double>(rate)};
}

void write_wav(const std::string& path, const Tensor& samples, double sample_rate) {
  if (samples.rank() != 2) throw ShapeError("write_wav: [channels,S] required");
  const std::size_t channels = samples.dim(0), n = samples.dim(1);
  const std::uint32_t rate = static_cast<std::uint32_t>(sample_rate);
  const std::uint32_t data_len = static_cast<std::uint32_t>(n * channels * 2);

  std::ostringstream os;
  auto w16 = [&](std::uint16_t v) {
    os.put(static_cast<char>(v & 0xff));
    os.put(static_cast<char>((v >> 8) & 0xff));
  };
  auto w32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };

  os.write("RIFF", 4);
  w32(36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  w32(16);
  w16(1);  // PCM
  w16(static_cast<std::uint16_t>(channels));
  w32(rate);
  w32(rate * static_cast<std::uint32_t>(channels) * 2);
  w16(static_cast<std::uint16_t>(channels * 2));
  w16(16);
  os.write("data", 4);
  w32(data_len);
  const auto& sv = samples.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      // symmetric with the read path's /32768 so a round trip stays within
      // half a quantization step
      const long q = std::lround(std::clamp(sv[c * n + i], -1.0, 1.0) * 32768.0);
      w16(static_cast<std::uint16_t>(
          static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767))));
    }
  write_file(path, os.str());
}

namespace {

std::vector<unsigned char> zlib_inflate(const unsigned char* src, std::size_t src_len,
                                        std::size_t expect) {
  std::vector<unsigned char> out(expect);
  uLongf out_len = static_cast<uLongf>(expect);
  const int rc = uncompress(out.data(), &out_len, src, static_cast<uLong>(src_len));
  if (rc != Z_OK || out_len != expect)
    throw DataFormatError("png: zlib inflate failed (rc " + std::to_string(rc) + ")");
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

Tensor read_png(const std::string& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 8 || std::memcmp(p, sig, 8) != 0)
    throw DataFormatError(path + ": not a PNG file");

  std::size_t width = 0, height = 0, channels = 0;
  unsigned bit_depth = 0;
  std::vector<unsigned char> idat;

  std::size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = be32(p + pos);
    const unsigned char* type = p + pos + 4;
    const unsigned char* payload = p + pos + 8;
    if (pos + 12 + len > bytes.size()) throw DataFormatError(path + ": truncated chunk");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataFormatError(path + ": bad IHDR");
      width = be32(payload);
      height = be32(payload + 4);
      bit_depth = payload[8];
      const unsigned color = payload[9];
      const unsigned interlace = payload[12];
      if (bit_depth != 8) throw DataFormatError(path + ": only 8-bit PNGs supported");
      if (interlace != 0) throw DataFormatError(path + ": interlaced PNGs unsupported");
      switch (color) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw DataFormatError(path + ": unsupported color type " + std::to_string(color));
      }
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width == 0 || height == 0 || channels == 0 || idat.empty())
    throw DataFormatError(path + ": missing IHDR/IDAT");

  const std::size_t stride = width * channels;
  auto raw = zlib_inflate(idat.data(), idat.size(), (stride + 1) * height);

  // undo per-scanline filters
  std::vector<unsigned char> img(stride * height);
  for (std::size_t y = 0; y < height; ++y) {
    const unsigned filter = raw[y * (stride + 1)];
    const unsigned char* src = raw.data() + y * (stride + 1) + 1;
    unsigned char* dst = img.data() + y * stride;
    const unsigned char* prev = y ? img.data() + (y - 1) * stride : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= channels ? dst[x - channels] : 0;
      const int b = prev ? prev[x] : 0;
      const int c = (prev && x >= channels) ? prev[x - channels] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DataFormatError(path + ": unknown filter " + std::to_string(filter));
      }
      dst[x] = static_cast<unsigned char>(v & 0xff);
    }
  }

  Tensor out({3, height, width});
  auto& ov = out.mutable_data();
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const std::size_t src_ch = channels == 1 ? 0 : ch;
        ov[(ch * height + y) * width + x] =
            static_cast<double>(img[y * stride + x * channels + src_ch]) / 255.0;
      }
  return out;
}

void write_png(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("write_png: [3,H,W] required");
  const std::size_t height = rgb.dim(1), width = rgb.dim(2);
  const std::size_t stride = width * 3;

  std::vector<unsigned char> raw((stride + 1) * height);
  const auto& v = rgb.data();
  for (std::size_t y = 0; y < height; ++y) {
    raw[y * (stride + 1)] = 0;  // filter: none
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double val = std::clamp(v[(ch * height + y) * width + x], 0.0, 1.0);
        raw[y * (stride + 1) + 1 + x * 3 + ch] =
            static_cast<unsigned char>(std::lround(val * 255.0));
      }
  }

  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataFormatError("png: deflate failed");
  comp.resize(comp_cap);

  std::string out;
  out.append("\x89PNG\r\n\x1a\n", 8);
  auto chunk = [&](const char* type, const std::string& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    std::string body = std::string(type, 4) + payload;
    out += body;
    put_be32(out, static_cast<std::uint32_t>(
                      crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                            static_cast<uInt>(body.size()))));
  };

  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", std::string(reinterpret_cast<const char*>(comp.data()), comp.size()));
  chunk("IEND", "");
  write_file(path, out);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  const std::string bytes = read_file(path);
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(bytes);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      // trim surrounding spaces
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace mainet::io
