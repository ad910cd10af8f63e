#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "anisoflow/curve.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/format.hpp"
#include "anisoflow/record.hpp"
#include "anisoflow/stabilizer.hpp"

namespace anisoflow::io {

class IoError : public Error {
 public:
  using Error::Error;
};

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

inline void write_curve_csv(std::ostream& os, const PolygonalCurve& c) {
  os << "x,y\n";
  for (const Point& p : c.vertices()) os << format_double(p.x()) << ',' << format_double(p.y()) << '\n';
}

inline void write_curve_csv(const std::filesystem::path& path, const PolygonalCurve& c) {
  auto os = open_out(path);
  write_curve_csv(os, c);
}

/// Reads "x,y" rows (a header line is skipped if it does not parse).
inline std::vector<Point> read_points_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::vector<Point> pts;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cols = split(line);
    if (cols.size() < 2) throw IoError(path.string() + ": expected two columns in '" + line + "'");
    try {
      pts.emplace_back(parse_double(cols[0]), parse_double(cols[1]));
    } catch (const IoError&) {
      if (!first) throw;
    }
    first = false;
  }
  return pts;
}

inline PolygonalCurve read_curve_csv(const std::filesystem::path& path, Topology t) {
  return PolygonalCurve::make(t, read_points_csv(path));
}

inline std::string record_header(const RunRecord& rec) {
  std::string h = "t,area,energy,mesh_ratio,newton_iters";
  if (rec.has_contact()) h += ",x_left,x_right,theta_left,theta_right";
  return h;
}

inline void write_record_row(std::ostream& os, const RecordRow& r) {
  os << format_double(r.t) << ',' << format_double(r.area) << ',' << format_double(r.energy) << ','
     << format_double(r.mesh_ratio) << ',' << r.newton_iters;
  if (r.contact)
    os << ',' << format_double(r.contact->x_left) << ',' << format_double(r.contact->x_right)
       << ',' << format_double(r.contact->theta_left) << ','
       << format_double(r.contact->theta_right);
  os << '\n';
}

inline void write_record_csv(std::ostream& os, const RunRecord& rec) {
  os << record_header(rec) << '\n';
  for (const auto& r : rec.rows) write_record_row(os, r);
}

inline void write_record_csv(const std::filesystem::path& path, const RunRecord& rec) {
  auto os = open_out(path);
  write_record_csv(os, rec);
}

inline void write_table_csv(std::ostream& os, const StabilizerTable& t) {
  os << "theta,k0\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    os << format_double(t.thetas()[i]) << ',' << format_double(t.values()[i]) << '\n';
}

inline void write_table_csv(const std::filesystem::path& path, const StabilizerTable& t) {
  auto os = open_out(path);
  write_table_csv(os, t);
}

}  // namespace anisoflow::io
