#pragma once

// Minimal NPY v1.0 reader/writer: little-endian float32 output with a
// 64-byte-aligned header, and a reader that accepts the common numeric
// dtypes (converting when lenient) for radar cubes and feature arrays.

#include <cstring>
#include <filesystem>
#include <fstream>

#include "rhgr/dsp/config.hpp"

namespace rhgr::io {

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<float> data;
  std::string source_dtype;  // dtype found in the file
};

inline std::string npy_header_dict(const std::vector<std::size_t>& shape) {
  std::string s = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) s += ",";
    if (i + 1 < shape.size()) s += " ";
  }
  s += "), }";
  return s;
}

inline void write_npy(const std::filesystem::path& path,
                      const std::vector<float>& data,
                      const std::vector<std::size_t>& shape) {
  std::size_t count = 1;
  for (std::size_t d : shape) count *= d;
  if (count != data.size()) throw ShapeError("write_npy: shape does not match data size");
  std::string dict = npy_header_dict(shape);
  // magic(6) + version(2) + hlen(2) + dict + padding + '\n', total % 64 == 0
  const std::size_t base = 6 + 2 + 2;
  std::size_t total = base + dict.size() + 1;
  const std::size_t pad = (64 - total % 64) % 64;
  dict += std::string(pad, ' ');
  dict += '\n';
  const std::size_t hlen = dict.size();
  if (hlen > 65535) throw FormatError("write_npy: header too long");

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("write_npy: cannot open " + path.string());
  os.write("\x93NUMPY", 6);
  os.put('\x01');
  os.put('\x00');
  os.put(static_cast<char>(hlen & 0xff));
  os.put(static_cast<char>((hlen >> 8) & 0xff));
  os.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!os) throw DataError("write_npy: write failed for " + path.string());
}

namespace detail {

inline std::string dict_value(const std::string& dict, const std::string& key) {
  const std::size_t k = dict.find("'" + key + "'");
  if (k == std::string::npos) throw FormatError("read_npy: header missing " + key);
  std::size_t c = dict.find(':', k);
  if (c == std::string::npos) throw FormatError("read_npy: malformed header near " + key);
  ++c;
  while (c < dict.size() && dict[c] == ' ') ++c;
  std::size_t e = c;
  if (dict[c] == '(') {
    e = dict.find(')', c);
    if (e == std::string::npos) throw FormatError("read_npy: malformed shape");
    ++e;
  } else {
    while (e < dict.size() && dict[e] != ',' && dict[e] != '}') ++e;
  }
  std::string v = dict.substr(c, e - c);
  while (!v.empty() && (v.back() == ' ' || v.back() == ',')) v.pop_back();
  return v;
}

template <typename T>
inline void convert_payload(const std::vector<char>& raw, std::vector<float>& out,
                            bool byteswap) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[sizeof(T)];
    std::memcpy(buf, raw.data() + i * sizeof(T), sizeof(T));
    if (byteswap) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    out[i] = static_cast<float>(v);
  }
}

}  // namespace detail

inline NpyArray read_npy(const std::filesystem::path& path, bool lenient = false) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_npy: cannot open " + path.string());
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, "\x93NUMPY", 6) != 0)
    throw FormatError("read_npy: bad magic in " + path.string());
  unsigned char ver[2];
  is.read(reinterpret_cast<char*>(ver), 2);
  if (ver[0] != 1 || ver[1] != 0)
    throw FormatError("read_npy: unsupported version " + std::to_string(ver[0]) + "." +
                      std::to_string(ver[1]));
  unsigned char hl[2];
  is.read(reinterpret_cast<char*>(hl), 2);
  const std::size_t hlen = static_cast<std::size_t>(hl[0]) |
                           (static_cast<std::size_t>(hl[1]) << 8);
  std::string dict(hlen, '\0');
  is.read(dict.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw FormatError("read_npy: truncated header");

  if (detail::dict_value(dict, "fortran_order") != "False")
    throw FormatError("read_npy: fortran_order not supported");
  std::string descr = detail::dict_value(dict, "descr");
  if (descr.size() >= 2 && descr.front() == '\'' && descr.back() == '\'')
    descr = descr.substr(1, descr.size() - 2);

  NpyArray arr;
  arr.source_dtype = descr;
  std::string shape_str = detail::dict_value(dict, "shape");
  for (std::size_t p = 0; p < shape_str.size();) {
    if (!std::isdigit(static_cast<unsigned char>(shape_str[p]))) {
      ++p;
      continue;
    }
    std::size_t q = p;
    while (q < shape_str.size() && std::isdigit(static_cast<unsigned char>(shape_str[q])))
      ++q;
    arr.shape.push_back(std::stoul(shape_str.substr(p, q - p)));
    p = q;
  }

  const bool big_endian = descr.size() > 0 && descr[0] == '>';
  const bool native = descr.size() > 0 && (descr[0] == '<' || descr[0] == '|' ||
                                           descr[0] == '=');
  if (big_endian && !lenient)
    throw FormatError("read_npy: dtype " + descr + " is big-endian (strict mode)");
  if (!big_endian && !native) throw FormatError("read_npy: dtype " + descr);
  const std::string kind = descr.substr(1);

  std::size_t count = 1;
  for (std::size_t d : arr.shape) count *= d;
  std::size_t elem;
  if (kind == "f4") elem = 4;
  else if (kind == "f8") elem = 8;
  else if (kind == "i2") elem = 2;
  else if (kind == "i4") elem = 4;
  else throw FormatError("read_npy: dtype " + descr + " not supported");

  std::vector<char> raw(count * elem);
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!is) throw FormatError("read_npy: truncated payload in " + path.string());
  if (kind == "f4") detail::convert_payload<float>(raw, arr.data, big_endian);
  else if (kind == "f8") detail::convert_payload<double>(raw, arr.data, big_endian);
  else if (kind == "i2") detail::convert_payload<std::int16_t>(raw, arr.data, big_endian);
  else detail::convert_payload<std::int32_t>(raw, arr.data, big_endian);
  return arr;
}

// Radar-cube wrappers with strict shape validation.
inline void write_npy(const dsp::RadarCube& cube, const std::filesystem::path& path) {
  write_npy(path, cube.data, {cube.frames, cube.rx, cube.chirps, cube.samples});
}

inline dsp::RadarCube read_npy_cube(const std::filesystem::path& path,
                                    const dsp::RadarConfig& cfg = {},
                                    std::size_t frames = 100, bool lenient = false) {
  NpyArray arr = read_npy(path, lenient);
  const std::vector<std::size_t> want{frames, cfg.rx_channels, cfg.chirps_per_frame,
                                      cfg.samples_per_chirp};
  if (arr.shape != want) {
    std::string got = "(";
    for (std::size_t d : arr.shape) got += std::to_string(d) + ",";
    throw FormatError("read_npy: shape " + got + ") does not match the radar cube");
  }
  dsp::RadarCube cube(want[0], want[1], want[2], want[3]);
  cube.data = std::move(arr.data);
  return cube;
}

}  // namespace rhgr::io
