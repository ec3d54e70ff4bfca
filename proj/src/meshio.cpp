#include "tetfield/meshio.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tetfield {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot open for writing: " + path);
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open for reading: " + path);
  return in;
}

std::uint32_t resolve_obj_index(const std::string& token, std::size_t vertex_count, const std::string& where) {
  const auto slash = token.find('/');
  const std::string head = token.substr(0, slash);
  long long idx = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
  if (ec != std::errc() || ptr != head.data() + head.size() || idx == 0) {
    fail(ErrorCode::parse_error, where + ": bad face index '" + token + "'");
  }
  const long long n = static_cast<long long>(vertex_count);
  const long long zero_based = idx > 0 ? idx - 1 : n + idx;
  if (zero_based < 0 || zero_based >= n) {
    fail(ErrorCode::parse_error, where + ": face index out of range '" + token + "'");
  }
  return static_cast<std::uint32_t>(zero_based);
}

}  // namespace

RawTriangles read_obj(const std::string& path) {
  auto in = open_in(path);
  RawTriangles mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) fail(ErrorCode::parse_error, where + ": bad vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      std::string tok;
      while (ls >> tok) tokens.push_back(tok);
      if (tokens.size() != 3) {
        fail(ErrorCode::parse_error, where + ": only triangular faces are supported (got " +
                                         std::to_string(tokens.size()) + " corners)");
      }
      std::array<std::uint32_t, 3> f{};
      for (int i = 0; i < 3; ++i) f[i] = resolve_obj_index(tokens[i], mesh.vertices.size(), where);
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

void write_obj(const std::string& path, const std::vector<Vec3>& vertices,
               const std::vector<std::array<std::uint32_t, 3>>& faces) {
  auto out = open_out(path);
  for (const auto& v : vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  require(static_cast<bool>(out), ErrorCode::io_error, "write failed: " + path);
}

void write_vtk_tets(const std::string& path, const std::vector<Vec3>& vertices,
                    const std::vector<std::array<std::uint32_t, 4>>& tets) {
  auto out = open_out(path);
  out << "# vtk DataFile Version 3.0\ntetfield tetrahedral mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << vertices.size() << " double\n";
  for (const auto& v : vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  out << "CELLS " << tets.size() << ' ' << tets.size() * 5 << '\n';
  for (const auto& t : tets) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << tets.size() << '\n';
  for (std::size_t i = 0; i < tets.size(); ++i) out << "10\n";
  require(static_cast<bool>(out), ErrorCode::io_error, "write failed: " + path);
}

RawTets read_vtk_tets(const std::string& path) {
  auto in = open_in(path);
  RawTets mesh;
  std::string word;
  while (in >> word) {
    if (word == "POINTS") {
      std::size_t n = 0;
      std::string type;
      in >> n >> type;
      mesh.vertices.resize(n);
      for (auto& v : mesh.vertices) in >> v.x() >> v.y() >> v.z();
    } else if (word == "CELLS") {
      std::size_t n = 0, total = 0;
      in >> n >> total;
      mesh.tets.resize(n);
      for (auto& t : mesh.tets) {
        int count = 0;
        in >> count;
        if (count != 4) fail(ErrorCode::parse_error, path + ": non-tet cell");
        in >> t[0] >> t[1] >> t[2] >> t[3];
      }
    }
  }
  if (in.bad()) fail(ErrorCode::parse_error, path);
  return mesh;
}

void write_medit_tets(const std::string& path, const std::vector<Vec3>& vertices,
                      const std::vector<std::array<std::uint32_t, 4>>& tets) {
  auto out = open_out(path);
  out << "MeshVersionFormatted 2\nDimension 3\n\nVertices\n" << vertices.size() << '\n';
  for (const auto& v : vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << " 0\n";
  out << "\nTetrahedra\n" << tets.size() << '\n';
  for (const auto& t : tets) out << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' ' << t[3] + 1 << " 0\n";
  out << "\nEnd\n";
  require(static_cast<bool>(out), ErrorCode::io_error, "write failed: " + path);
}

RawTets read_medit_tets(const std::string& path) {
  auto in = open_in(path);
  RawTets mesh;
  std::string word;
  while (in >> word) {
    if (word == "Vertices") {
      std::size_t n = 0;
      in >> n;
      mesh.vertices.resize(n);
      int ref = 0;
      for (auto& v : mesh.vertices) in >> v.x() >> v.y() >> v.z() >> ref;
    } else if (word == "Tetrahedra") {
      std::size_t n = 0;
      in >> n;
      mesh.tets.resize(n);
      int ref = 0;
      for (auto& t : mesh.tets) {
        in >> t[0] >> t[1] >> t[2] >> t[3] >> ref;
        for (auto& i : t) i -= 1;
      }
    } else if (word == "End") {
      break;
    }
  }
  if (in.bad()) fail(ErrorCode::parse_error, path);
  return mesh;
}

void write_tets_by_extension(const std::string& path, const std::vector<Vec3>& vertices,
                             const std::vector<std::array<std::uint32_t, 4>>& tets) {
  auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".mesh")) {
    write_medit_tets(path, vertices, tets);
  } else if (ends_with(".vtk")) {
    write_vtk_tets(path, vertices, tets);
  } else {
    fail(ErrorCode::invalid_parameter, "unknown tet mesh extension (use .vtk or .mesh): " + path);
  }
}

}  // namespace tetfield
