#include "flowssm/geometry/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm::geometry {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

double TriMesh::face_area(Eigen::Index f) const {
  const Vec3 a = vertex(faces(f, 0));
  const Vec3 b = vertex(faces(f, 1));
  const Vec3 c = vertex(faces(f, 2));
  return 0.5 * (b - a).cross(c - a).norm();
}

double TriMesh::total_area() const {
  double area = 0.0;
  for (Eigen::Index f = 0; f < face_count(); ++f) area += face_area(f);
  return area;
}

void TriMesh::validate() const {
  if (faces.rows() == 0) throw TopologyError("mesh has no faces");
  const auto n = static_cast<std::int64_t>(vertices.rows());
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const auto a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
    for (auto idx : {a, b, c}) {
      if (idx < 0 || idx >= n) {
        throw TopologyError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                            " but mesh has " + std::to_string(n) + " vertices");
      }
    }
    if (a == b || b == c || a == c) throw TopologyError("face " + std::to_string(f) + " is degenerate");
  }
  if (!vertices.allFinite()) throw TopologyError("mesh has non-finite vertex coordinates");
  if (!(total_area() > 0.0)) throw TopologyError("mesh has zero total area");
}

void PointSet::validate() const {
  if (points.rows() == 0) throw ShapeMismatch("point set is empty");
  if (!points.allFinite()) throw NonFiniteValue("point set has non-finite coordinates");
}

Points RigidTransform::apply(const Points& p) const {
  Points out = p * rotation.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  return {rotation * inner.rotation, rotation * inner.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

double RigidTransform::rotation_angle() const {
  return Eigen::AngleAxisd(rotation).angle();
}

BoundingBox bounding_box(const Points& p) {
  BoundingBox box;
  for (Eigen::Index i = 0; i < p.rows(); ++i) box.extend(p.row(i).transpose());
  return box;
}

std::optional<MeshFormat> format_from_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  return std::nullopt;
}

namespace {

TriMesh from_lists(const std::vector<Vec3>& verts, const std::vector<std::array<std::int64_t, 3>>& tris) {
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t f = 0; f < tris.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const auto idx = tris[f][static_cast<std::size_t>(k)];
      if (idx < 0 || idx >= static_cast<std::int64_t>(verts.size())) {
        throw TopologyError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                            " but mesh has " + std::to_string(verts.size()) + " vertices");
      }
      mesh.faces(static_cast<Eigen::Index>(f), k) = static_cast<std::int32_t>(idx);
    }
  }
  mesh.validate();
  return mesh;
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view tok, std::size_t line) {
  std::int64_t v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc()) {
    throw ParseError("line " + std::to_string(line) + ": bad index '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Vec3> verts;
  std::vector<std::array<std::int64_t, 3>> tris;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::int64_t> poly;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0].starts_with('#')) continue;
    if (toks[0] == "v") {
      if (toks.size() < 4) throw ParseError("line " + std::to_string(lineno) + ": vertex needs 3 coordinates");
      verts.emplace_back(parse_double(toks[1], lineno), parse_double(toks[2], lineno), parse_double(toks[3], lineno));
    } else if (toks[0] == "f") {
      if (toks.size() < 4) throw ParseError("line " + std::to_string(lineno) + ": face needs at least 3 indices");
      poly.clear();
      for (std::size_t k = 1; k < toks.size(); ++k) {
        auto tok = toks[k];
        tok = tok.substr(0, tok.find('/'));
        auto idx = parse_int(tok, lineno);
        if (idx < 0) idx = static_cast<std::int64_t>(verts.size()) + idx + 1;  // relative index
        if (idx == 0) throw ParseError("line " + std::to_string(lineno) + ": OBJ indices are 1-based");
        poly.push_back(idx - 1);
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) tris.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  return from_lists(verts, tris);
}

// ---------------------------------------------------------------- PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType ply_type(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::Int8;
  if (name == "uchar" || name == "uint8") return PlyType::UInt8;
  if (name == "short" || name == "int16") return PlyType::Int16;
  if (name == "ushort" || name == "uint16") return PlyType::UInt16;
  if (name == "int" || name == "int32") return PlyType::Int32;
  if (name == "uint" || name == "uint32") return PlyType::UInt32;
  if (name == "float" || name == "float32") return PlyType::Float32;
  if (name == "double" || name == "float64") return PlyType::Float64;
  throw ParseError("unknown PLY type '" + std::string(name) + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  double read(PlyType t) {
    const auto n = ply_size(t);
    if (pos_ + n > data_.size()) throw ParseError("PLY binary payload truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    switch (t) {
      case PlyType::Int8: return get<std::int8_t>(p);
      case PlyType::UInt8: return get<std::uint8_t>(p);
      case PlyType::Int16: return get<std::int16_t>(p);
      case PlyType::UInt16: return get<std::uint16_t>(p);
      case PlyType::Int32: return get<std::int32_t>(p);
      case PlyType::UInt32: return get<std::uint32_t>(p);
      case PlyType::Float32: return get<float>(p);
      case PlyType::Float64: return get<double>(p);
    }
    return 0.0;
  }

 private:
  template <typename T>
  static double get(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

class TokenReader {
 public:
  explicit TokenReader(std::string_view data) : toks_(split_ws(data)) {}
  double read(PlyType) {
    if (pos_ >= toks_.size()) throw ParseError("PLY ASCII payload truncated");
    return parse_double(toks_[pos_++], 0);
  }

 private:
  std::vector<std::string_view> toks_;
  std::size_t pos_ = 0;
};

template <typename Reader>
TriMesh read_ply_body(Reader& reader, const std::vector<PlyElement>& elements) {
  std::vector<Vec3> verts;
  std::vector<std::array<std::int64_t, 3>> tris;
  std::vector<std::int64_t> poly;
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix = -1, iy = -1, iz = -1, iface = -1;
    for (std::size_t p = 0; p < el.props.size(); ++p) {
      const auto& name = el.props[p].name;
      if (name == "x") ix = static_cast<int>(p);
      if (name == "y") iy = static_cast<int>(p);
      if (name == "z") iz = static_cast<int>(p);
      if (el.props[p].is_list && (name == "vertex_indices" || name == "vertex_index")) iface = static_cast<int>(p);
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw ParseError("PLY vertex element lacks x/y/z");
    if (is_face && iface < 0) throw ParseError("PLY face element lacks vertex_indices");
    for (std::size_t i = 0; i < el.count; ++i) {
      Vec3 v = Vec3::Zero();
      for (std::size_t p = 0; p < el.props.size(); ++p) {
        const auto& prop = el.props[p];
        if (prop.is_list) {
          const auto n = static_cast<std::size_t>(reader.read(prop.count_type));
          if (is_face && static_cast<int>(p) == iface) {
            poly.clear();
            for (std::size_t k = 0; k < n; ++k) poly.push_back(static_cast<std::int64_t>(reader.read(prop.type)));
            if (poly.size() < 3) throw ParseError("PLY face with fewer than 3 indices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) tris.push_back({poly[0], poly[k], poly[k + 1]});
          } else {
            for (std::size_t k = 0; k < n; ++k) reader.read(prop.type);
          }
        } else {
          const double value = reader.read(prop.type);
          if (is_vertex) {
            if (static_cast<int>(p) == ix) v.x() = value;
            if (static_cast<int>(p) == iy) v.y() = value;
            if (static_cast<int>(p) == iz) v.z() = value;
          }
        }
      }
      if (is_vertex) verts.push_back(v);
    }
  }
  return from_lists(verts, tris);
}

TriMesh load_ply(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  const auto header_end = data.find("end_header");
  if (!data.starts_with("ply") || header_end == std::string::npos) throw ParseError("not a PLY file: " + path.string());
  const auto body_start = data.find('\n', header_end);
  if (body_start == std::string::npos) throw ParseError("PLY header not terminated");

  std::istringstream header(data.substr(0, header_end));
  std::string line;
  std::string format;
  std::vector<PlyElement> elements;
  while (std::getline(header, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() < 2) throw ParseError("bad PLY format line");
      format = std::string(toks[1]);
    } else if (toks[0] == "element") {
      if (toks.size() < 3) throw ParseError("bad PLY element line");
      elements.push_back({std::string(toks[1]), static_cast<std::size_t>(parse_int(toks[2], 0)), {}});
    } else if (toks[0] == "property") {
      if (elements.empty()) throw ParseError("PLY property before element");
      PlyProperty prop;
      if (toks.size() >= 5 && toks[1] == "list") {
        prop.is_list = true;
        prop.count_type = ply_type(toks[2]);
        prop.type = ply_type(toks[3]);
        prop.name = std::string(toks[4]);
      } else if (toks.size() >= 3) {
        prop.type = ply_type(toks[1]);
        prop.name = std::string(toks[2]);
      } else {
        throw ParseError("bad PLY property line");
      }
      elements.back().props.push_back(prop);
    }
  }
  const std::string_view body(data.data() + body_start + 1, data.size() - body_start - 1);
  if (format == "ascii") {
    TokenReader reader(body);
    return read_ply_body(reader, elements);
  }
  if (format == "binary_little_endian") {
    ByteReader reader(body);
    return read_ply_body(reader, elements);
  }
  throw ParseError("unsupported PLY format '" + format + "'");
}

std::string obj_text(const TriMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  }
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
  }
  return std::move(out).str();
}

std::string ply_header(const TriMesh& mesh, std::string_view format) {
  std::ostringstream out;
  out << "ply\nformat " << format << " 1.0\n"
      << "element vertex " << mesh.vertices.rows() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.faces.rows() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  return std::move(out).str();
}

std::string ply_binary(const TriMesh& mesh) {
  std::string out = ply_header(mesh, "binary_little_endian");
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double v = mesh.vertices(i, k);
      out.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    out.push_back(static_cast<char>(3));
    for (int k = 0; k < 3; ++k) {
      const std::int32_t idx = mesh.faces(f, k);
      out.append(reinterpret_cast<const char*>(&idx), sizeof idx);
    }
  }
  return out;
}

std::string ply_ascii(const TriMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  out << ply_header(mesh, "ascii");
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  }
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
  }
  return std::move(out).str();
}

}  // namespace

TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  return format == MeshFormat::Obj ? load_obj(path) : load_ply(path);
}

TriMesh load_mesh(const std::filesystem::path& path) {
  auto fmt = format_from_extension(path);
  if (!fmt) throw ParseError("unrecognized mesh extension: " + path.string());
  return load_mesh(path, *fmt);
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  mesh.validate();
  switch (format) {
    case MeshFormat::Obj: write_file_atomic(path, obj_text(mesh)); break;
    case MeshFormat::Ply: write_file_atomic(path, ply_binary(mesh)); break;
    case MeshFormat::PlyAscii: write_file_atomic(path, ply_ascii(mesh)); break;
  }
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  auto fmt = format_from_extension(path);
  if (!fmt) throw IoError("unrecognized mesh extension: " + path.string());
  save_mesh(mesh, path, *fmt);
}

}  // namespace flowssm::geometry
