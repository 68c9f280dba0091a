#pragma once

// PLY point cloud reader/writer.
//
// Supports `format ascii 1.0` and `format binary_little_endian 1.0`. Only the
// `vertex` element is loaded (x, y, z and optional nx, ny, nz); every other
// element and property, list properties included, is parsed and skipped.
// Coordinates are written as float64 so that save/load is bit-exact.

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/io.hpp"

namespace gsm {

enum class PlyFormat { Ascii, BinaryLittleEndian };

namespace ply_detail {

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

inline bool parse_scalar(std::string_view name, Scalar& out) {
  struct Entry { std::string_view a, b; Scalar s; };
  static constexpr Entry table[] = {
      {"char", "int8", Scalar::I8},       {"uchar", "uint8", Scalar::U8},
      {"short", "int16", Scalar::I16},    {"ushort", "uint16", Scalar::U16},
      {"int", "int32", Scalar::I32},      {"uint", "uint32", Scalar::U32},
      {"float", "float32", Scalar::F32},  {"double", "float64", Scalar::F64},
  };
  for (const auto& e : table) {
    if (name == e.a || name == e.b) {
      out = e.s;
      return true;
    }
  }
  return false;
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8: case Scalar::U8: return 1;
    case Scalar::I16: case Scalar::U16: return 2;
    case Scalar::I32: case Scalar::U32: case Scalar::F32: return 4;
    case Scalar::F64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::F32;
  bool is_list = false;
  Scalar count_type = Scalar::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

template <typename T>
T load_le(const char* p) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double decode(Scalar s, const char* p) {
  switch (s) {
    case Scalar::I8: return load_le<std::int8_t>(p);
    case Scalar::U8: return load_le<std::uint8_t>(p);
    case Scalar::I16: return load_le<std::int16_t>(p);
    case Scalar::U16: return load_le<std::uint16_t>(p);
    case Scalar::I32: return load_le<std::int32_t>(p);
    case Scalar::U32: return load_le<std::uint32_t>(p);
    case Scalar::F32: return load_le<float>(p);
    case Scalar::F64: return load_le<double>(p);
  }
  return 0.0;
}

// Cursor over the body of an ASCII file, tracking the byte offset for errors.
class AsciiCursor {
 public:
  AsciiCursor(std::string_view data, std::size_t pos) : data_(data), pos_(pos) {}

  double next() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (pos_ >= data_.size()) throw FormatError("unexpected end of ASCII data", pos_);
    double v = 0.0;
    const char* begin = data_.data() + pos_;
    const char* end = data_.data() + data_.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc()) throw FormatError("malformed ASCII number", pos_);
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    return v;
  }

 private:
  std::string_view data_;
  std::size_t pos_;
};

}  // namespace ply_detail

inline PointCloud parse_ply(std::string_view data) {
  using namespace ply_detail;
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& line_start) -> std::string {
    line_start = pos;
    const auto nl = data.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("header not terminated", pos);
    std::string line(data.substr(pos, nl - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl + 1;
    return line;
  };

  std::size_t at = 0;
  if (next_line(at) != "ply") throw FormatError("missing 'ply' magic", 0);

  bool have_format = false;
  PlyFormat format = PlyFormat::Ascii;
  std::vector<Element> elements;
  for (;;) {
    std::string line = next_line(at);
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "end_header") break;
    if (key == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") format = PlyFormat::Ascii;
      else if (kind == "binary_little_endian") format = PlyFormat::BinaryLittleEndian;
      else throw FormatError("unsupported PLY format '" + kind + "'", at);
      have_format = true;
    } else if (key == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0) throw FormatError("bad element line", at);
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw FormatError("property before element", at);
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        if (!parse_scalar(count_type, p.count_type) || !parse_scalar(item_type, p.type))
          throw FormatError("bad list property type", at);
      } else {
        ls >> p.name;
        if (!parse_scalar(type, p.type)) throw FormatError("unknown property type '" + type + "'", at);
      }
      if (p.name.empty()) throw FormatError("property without name", at);
      elements.back().props.push_back(std::move(p));
    } else {
      throw FormatError("unknown header keyword '" + key + "'", at);
    }
  }
  if (!have_format) throw FormatError("missing format line", 0);

  PointCloud cloud;
  bool found_vertex = false;
  ply_detail::AsciiCursor ascii(data, pos);

  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
    if (is_vertex) {
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const auto& n = e.props[k].name;
        const int ki = static_cast<int>(k);
        if (e.props[k].is_list) continue;
        if (n == "x") ix = ki;
        else if (n == "y") iy = ki;
        else if (n == "z") iz = ki;
        else if (n == "nx") inx = ki;
        else if (n == "ny") iny = ki;
        else if (n == "nz") inz = ki;
      }
      if (ix < 0 || iy < 0 || iz < 0) throw FormatError("vertex element lacks x/y/z", 0);
      found_vertex = true;
    }
    const bool with_normals = is_vertex && inx >= 0 && iny >= 0 && inz >= 0;
    if (is_vertex) {
      const std::size_t hint = std::min(e.count, data.size());
      cloud.points.reserve(hint);
      if (with_normals) cloud.normals.reserve(hint);
    }

    std::vector<double> values(e.props.size());
    for (std::size_t r = 0; r < e.count; ++r) {
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const auto& p = e.props[k];
        if (format == PlyFormat::Ascii) {
          if (p.is_list) {
            const double n = ascii.next();
            if (n < 0) throw FormatError("negative list length", pos);
            for (long long j = 0; j < static_cast<long long>(n); ++j) ascii.next();
          } else {
            values[k] = ascii.next();
          }
        } else {
          if (p.is_list) {
            const std::size_t cs = scalar_size(p.count_type);
            if (pos + cs > data.size()) throw FormatError("truncated binary list", pos);
            const double n = decode(p.count_type, data.data() + pos);
            if (n < 0) throw FormatError("negative list length", pos);
            pos += cs;
            const std::size_t skip = static_cast<std::size_t>(n) * scalar_size(p.type);
            if (pos + skip > data.size()) throw FormatError("truncated binary list", pos);
            pos += skip;
          } else {
            const std::size_t s = scalar_size(p.type);
            if (pos + s > data.size()) throw FormatError("truncated binary payload", pos);
            values[k] = decode(p.type, data.data() + pos);
            pos += s;
          }
        }
      }
      if (is_vertex) {
        cloud.points.emplace_back(values[ix], values[iy], values[iz]);
        if (with_normals) {
          Vec3 n(values[inx], values[iny], values[inz]);
          const double len = n.norm();
          if (len > 0.0 && std::abs(len - 1.0) > 1e-6) n /= len;
          cloud.normals.push_back(n);
        }
      }
    }
    if (is_vertex) break;
  }
  if (!found_vertex) throw FormatError("no vertex element", 0);
  return cloud;
}

inline PointCloud read_ply(const std::string& path) {
  const std::string data = read_file(path);
  try {
    return parse_ply(data);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.detail(), e.offset());
  }
}

inline std::string serialize_ply(const PointCloud& cloud, PlyFormat format,
                                 const std::vector<std::string>& comments = {}) {
  std::ostringstream out;
  out << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian")
      << " 1.0\n";
  for (const auto& c : comments) {
    std::string line = c;
    for (auto& ch : line) {
      if (ch == '\n' || ch == '\r') ch = ' ';
    }
    out << "comment " << line << '\n';
  }
  out << "element vertex " << cloud.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n";
  const bool normals = cloud.has_normals();
  if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n";

  if (format == PlyFormat::Ascii) {
    out.precision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      out << p.x() << ' ' << p.y() << ' ' << p.z();
      if (normals) {
        const auto& n = cloud.normals[i];
        out << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
      }
      out << '\n';
    }
  } else {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    auto put = [&](const Vec3& v) {
      out.write(reinterpret_cast<const char*>(v.data()), 3 * sizeof(double));
    };
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      put(cloud.points[i]);
      if (normals) put(cloud.normals[i]);
    }
  }
  return out.str();
}

inline void write_ply(const std::string& path, const PointCloud& cloud,
                      PlyFormat format = PlyFormat::BinaryLittleEndian,
                      const std::vector<std::string>& comments = {}) {
  atomic_write(path, serialize_ply(cloud, format, comments));
}

}  // namespace gsm
