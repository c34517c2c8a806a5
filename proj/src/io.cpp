#include "sofa/io.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sofa/error.hpp"

namespace sofa::io {

namespace fs = std::filesystem;

std::string format17(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

std::string format6(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
  std::string s(buf, r.ptr);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

void write_history_csv(std::ostream& os, std::span<const train::EpochRecord> history) {
  os << "epoch,area,penalty,lr\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << format17(r.area) << ',' << format17(r.penalty) << ',' << format17(r.lr) << '\n';
  }
}

void write_movement_csv(std::ostream& os, const geom::MovementSample& m) {
  os << "t,x_p,y_p,alpha,dx_p,dy_p,dalpha\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << format17(m.grid[i]) << ',' << format17(m.x_p[i].value()) << ',' << format17(m.y_p[i].value()) << ','
       << format17(m.alpha[i].value()) << ',' << format17(m.dx_p[i].value()) << ','
       << format17(m.dy_p[i].value()) << ',' << format17(m.dalpha[i].value()) << '\n';
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto r = std::from_chars(first, last, v);
  if (first == last || r.ec != std::errc() || r.ptr != last) throw ParseError("not a number: '" + s + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value", line);
  return v;
}

}  // namespace

geom::MovementSample read_movement_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split_fields(line);
    break;
  }
  const std::vector<std::string> full{"t", "x_p", "y_p", "alpha", "dx_p", "dy_p", "dalpha"};
  const std::vector<std::string> basic(full.begin(), full.begin() + 4);
  if (header != full && header != basic) {
    throw ParseError("movement header must be t,x_p,y_p,alpha[,dx_p,dy_p,dalpha]", lineno == 0 ? 1 : lineno);
  }
  const bool with_slopes = header.size() == full.size();

  std::vector<std::array<double, 7>> rows;
  std::vector<std::size_t> row_lines;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()),
                       lineno);
    }
    std::array<double, 7> r{};
    for (std::size_t k = 0; k < f.size(); ++k) r[k] = parse_double(f[k], lineno);
    if (!rows.empty() && !(r[0] > rows.back()[0])) throw ParseError("t must be strictly increasing", lineno);
    rows.push_back(r);
    row_lines.push_back(lineno);
  }
  if (rows.size() < 3) throw ParseError("movement needs at least 3 samples", lineno + 1);
  if (rows.front()[0] != 0.0) throw ParseError("first sample must be at t = 0", row_lines.front());
  if (rows.back()[0] != 1.0) throw ParseError("last sample must be at t = 1", row_lines.back());

  std::vector<double> t;
  for (const auto& r : rows) t.push_back(r[0]);
  geom::MovementSample m;
  m.grid = geom::TimeGrid(t);
  for (const auto& r : rows) {
    m.x_p.emplace_back(r[1]);
    m.y_p.emplace_back(r[2]);
    m.alpha.emplace_back(r[3]);
    if (with_slopes) {
      m.dx_p.emplace_back(r[4]);
      m.dy_p.emplace_back(r[5]);
      m.dalpha.emplace_back(r[6]);
    }
  }
  if (!with_slopes) {
    m.dx_p = geom::grid_derivative(m.x_p, m.grid);
    m.dy_p = geom::grid_derivative(m.y_p, m.grid);
    m.dalpha = geom::grid_derivative(m.alpha, m.grid);
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), row_lines.front());
  }
  return m;
}

geom::MovementSample read_movement_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_movement_csv(in);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

RunRegistry::RunRegistry(fs::path root) : root_(std::move(root)) {}

fs::path RunRegistry::default_root() {
  const char* env = std::getenv("SOFA_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

bool RunRegistry::completed(const std::string& run_id) const {
  return fs::exists(root_ / run_id / "summary.json");
}

fs::path RunRegistry::create(const std::string& run_id) const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw ConfigError("invalid run id '" + run_id + "'");
  }
  const fs::path dir = root_ / run_id;
  if (completed(run_id)) throw IoError("run '" + run_id + "' already completed in " + root_.string());
  std::error_code ec;
  if (fs::exists(dir)) fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create run directory " + dir.string());
  return dir;
}

void RunRegistry::complete(const fs::path& dir, const nlohmann::json& summary) const {
  write_json(dir / "summary.json", summary);
}

std::string derive_run_id(const std::string& prefix, const nlohmann::json& config) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%012llx", static_cast<unsigned long long>(h & 0xffffffffffffull));
  return prefix + "-" + buf;
}

}  // namespace sofa::io
