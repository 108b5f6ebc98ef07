#pragma once

// Minimal PLY vertex table I/O: ASCII or binary little/big-endian on read,
// binary little-endian float32 on write.

#include "dbs/common.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dbs {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
};

struct PlyVertexTable {
  std::vector<std::string> comments;
  std::vector<PlyProperty> properties;
  std::size_t count = 0;
  /// count x properties, row-major.
  std::vector<double> values;

  int column(const std::string& name) const {
    for (std::size_t k = 0; k < properties.size(); ++k) {
      if (properties[k].name == name) return static_cast<int>(k);
    }
    return -1;
  }
  double at(std::size_t row, int col) const { return values[row * properties.size() + static_cast<std::size_t>(col)]; }
};

namespace detail {

inline PlyType ply_type_from(const std::string& s, std::size_t line) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  throw ParseError("ply: unknown property type '" + s + "' on header line " + std::to_string(line));
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

template <class V> V load_scalar(const char* p, bool swap) {
  char buf[sizeof(V)];
  std::memcpy(buf, p, sizeof(V));
  if (swap) std::reverse(buf, buf + sizeof(V));
  V v;
  std::memcpy(&v, buf, sizeof(V));
  return v;
}

inline double ply_decode(const char* p, PlyType t, bool swap) {
  switch (t) {
    case PlyType::i8: return load_scalar<std::int8_t>(p, swap);
    case PlyType::u8: return load_scalar<std::uint8_t>(p, swap);
    case PlyType::i16: return load_scalar<std::int16_t>(p, swap);
    case PlyType::u16: return load_scalar<std::uint16_t>(p, swap);
    case PlyType::i32: return load_scalar<std::int32_t>(p, swap);
    case PlyType::u32: return load_scalar<std::uint32_t>(p, swap);
    case PlyType::f32: return load_scalar<float>(p, swap);
    case PlyType::f64: return load_scalar<double>(p, swap);
  }
  return 0.0;
}

}  // namespace detail

/// Reads the vertex element of a PLY document. Other elements must follow it
/// and are ignored.
inline PlyVertexTable parse_ply(const std::string& bytes) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw ParseError("ply: header not terminated by end_header");
    std::string line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    ++line_no;
    return line;
  };
  if (next_line() != "ply") throw FormatError("ply: missing 'ply' magic");
  PlyVertexTable t;
  enum { kAscii, kLittle, kBig } format = kAscii;
  bool in_vertex = false, seen_vertex = false, have_format = false;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info") {
      const std::size_t start = line.find_first_not_of(' ', kw.size());
      t.comments.push_back(start == std::string::npos ? std::string() : line.substr(start));
    } else if (kw == "format") {
      std::string f, version;
      ls >> f >> version;
      if (f == "ascii") format = kAscii;
      else if (f == "binary_little_endian") format = kLittle;
      else if (f == "binary_big_endian") format = kBig;
      else throw ParseError("ply: unknown format '" + f + "' on header line " + std::to_string(line_no));
      have_format = true;
    } else if (kw == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      if (!ls || n < 0) throw ParseError("ply: malformed element on header line " + std::to_string(line_no));
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) throw ParseError("ply: duplicate vertex element");
        if (!t.properties.empty() || seen_vertex) throw ParseError("ply: vertex element must come first");
        seen_vertex = true;
        t.count = static_cast<std::size_t>(n);
      } else if (!seen_vertex) {
        throw ParseError("ply: vertex element must come first");
      }
    } else if (kw == "property") {
      std::string type, name;
      ls >> type;
      if (type == "list") {
        if (in_vertex) throw ParseError("ply: list properties on vertices are not supported");
        continue;
      }
      ls >> name;
      if (!ls) throw ParseError("ply: malformed property on header line " + std::to_string(line_no));
      if (in_vertex) t.properties.push_back({name, detail::ply_type_from(type, line_no)});
    } else {
      throw ParseError("ply: unexpected header keyword '" + kw + "' on line " + std::to_string(line_no));
    }
  }
  if (!have_format) throw ParseError("ply: missing format line");
  if (!seen_vertex) throw ParseError("ply: no vertex element");
  const std::size_t np = t.properties.size();
  t.values.resize(t.count * np);
  if (format == kAscii) {
    std::istringstream body(bytes.substr(pos));
    for (std::size_t r = 0; r < t.count; ++r) {
      for (std::size_t c = 0; c < np; ++c) {
        if (!(body >> t.values[r * np + c])) {
          throw ParseError("ply: vertex record " + std::to_string(r) + " is truncated");
        }
      }
    }
    return t;
  }
  std::size_t stride = 0;
  for (const auto& p : t.properties) stride += detail::ply_size(p.type);
  const bool swap = (format == kBig) != (std::endian::native == std::endian::big);
  for (std::size_t r = 0; r < t.count; ++r) {
    if (pos + stride > bytes.size()) throw ParseError("ply: vertex record " + std::to_string(r) + " is truncated");
    const char* p = bytes.data() + pos;
    for (std::size_t c = 0; c < np; ++c) {
      t.values[r * np + c] = detail::ply_decode(p, t.properties[c].type, swap);
      p += detail::ply_size(t.properties[c].type);
    }
    pos += stride;
  }
  return t;
}

/// Binary little-endian PLY with float32 vertex properties.
/// `rows` holds count x names.size() values.
inline std::string format_ply_float(const std::vector<std::string>& comments, const std::vector<std::string>& names,
                                    std::size_t count, const std::vector<float>& rows) {
  if (rows.size() != count * names.size()) throw DomainError("ply: row data does not match property count");
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : comments) h << "comment " << c << '\n';
  h << "element vertex " << count << '\n';
  for (const auto& n : names) h << "property float " << n << '\n';
  h << "end_header\n";
  std::string out = h.str();
  const std::size_t header = out.size();
  out.resize(header + rows.size() * 4);
  char* dst = out.data() + header;
  for (float v : rows) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace dbs
