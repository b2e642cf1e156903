#include "mvfhn/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef MVFHN_GIT_DESCRIBE
#define MVFHN_GIT_DESCRIBE "unknown"
#endif

namespace mvfhn {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cannot write " + file.string());
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& file, const std::string& header) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw FormatError(file.string() + ": expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": not a number: '" + s + "'");
  }
}

long parse_index(const std::string& s, const std::string& where) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
    throw FormatError(where + ": not an index: '" + s + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

void write_law(const fs::path& dir, const EmpiricalLaw& law) {
  fs::create_directories(dir);
  auto atoms = open_out(dir / "atoms.csv");
  atoms << "atom_index,component,grid_index,value\n";
  for (std::size_t j = 0; j < law.size(); ++j) {
    const FieldPair& k = law.atom(j);
    for (Eigen::Index i = 0; i < k.u.size(); ++i) atoms << j << ",u," << i << ',' << format_double(k.u[i]) << '\n';
    for (Eigen::Index i = 0; i < k.v.size(); ++i) atoms << j << ",v," << i << ',' << format_double(k.v[i]) << '\n';
  }
  auto weights = open_out(dir / "weights.csv");
  weights << "atom_index,weight\n";
  for (std::size_t j = 0; j < law.size(); ++j) weights << j << ',' << format_double(law.weight(j)) << '\n';
}

EmpiricalLaw read_law(const fs::path& dir, GridPtr grid) {
  const auto wrows = read_csv(dir / "weights.csv", "atom_index,weight");
  const std::string wfile = (dir / "weights.csv").string();
  std::vector<double> weights(wrows.size(), std::nan(""));
  for (const auto& r : wrows) {
    if (r.size() != 2) throw FormatError(wfile + ": expected 2 columns");
    const long j = parse_index(r[0], wfile);
    if (static_cast<std::size_t>(j) >= weights.size()) throw FormatError(wfile + ": atom index out of range");
    weights[j] = parse_double(r[1], wfile);
  }
  for (double w : weights)
    if (std::isnan(w)) throw FormatError(wfile + ": missing atom weight");

  const std::string afile = (dir / "atoms.csv").string();
  const auto arows = read_csv(dir / "atoms.csv", "atom_index,component,grid_index,value");
  std::vector<FieldPair> atoms(weights.size());
  for (auto& k : atoms) {
    k.u = GridField::Constant(grid->size(), std::nan(""));
    k.v = GridField::Constant(grid->size(), std::nan(""));
  }
  for (const auto& r : arows) {
    if (r.size() != 4) throw FormatError(afile + ": expected 4 columns");
    const long j = parse_index(r[0], afile);
    const long i = parse_index(r[2], afile);
    if (static_cast<std::size_t>(j) >= atoms.size()) throw FormatError(afile + ": atom index without a weight");
    if (i >= grid->size()) throw FormatError(afile + ": grid index beyond the configured grid");
    GridField& target = r[1] == "u" ? atoms[j].u : r[1] == "v" ? atoms[j].v : throw FormatError(afile + ": bad component");
    target[i] = parse_double(r[3], afile);
  }
  for (const auto& k : atoms)
    if (k.u.hasNaN() || k.v.hasNaN()) throw FormatError(afile + ": atom values missing for some grid nodes");
  return EmpiricalLaw(std::move(grid), std::move(atoms), std::move(weights));
}

void write_field(const fs::path& file, const SpatialGrid& grid, const FieldPair& k) {
  auto out = open_out(file);
  out << "grid_index,x,u,v\n";
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    out << i << ',' << format_double(grid.x(i)) << ',' << format_double(k.u[i]) << ',' << format_double(k.v[i])
        << '\n';
}

FieldPair read_field(const fs::path& file, const SpatialGrid& grid) {
  const auto rows = read_csv(file, "grid_index,x,u,v");
  if (static_cast<Eigen::Index>(rows.size()) != grid.size())
    throw FormatError(file.string() + ": row count differs from the grid size");
  FieldPair k = FieldPair::zeros(grid);
  for (const auto& r : rows) {
    if (r.size() != 4) throw FormatError(file.string() + ": expected 4 columns");
    const long i = parse_index(r[0], file.string());
    if (i >= grid.size()) throw FormatError(file.string() + ": grid index out of range");
    k.u[i] = parse_double(r[2], file.string());
    k.v[i] = parse_double(r[3], file.string());
  }
  return k;
}

void write_series(const fs::path& file, const std::vector<SeriesRow>& series) {
  auto out = open_out(file);
  out << "t,mean_u_l2sq,mean_v_l2sq,energy,m4,tail_mass_R,h1_u,h1_v2,w2_to_prev_checkpoint,energy4\n";
  for (const auto& r : series) {
    out << format_double(r.t) << ',' << format_double(r.mean_u_l2sq) << ',' << format_double(r.mean_v_l2sq) << ','
        << format_double(r.energy) << ',' << format_double(r.m4) << ',' << format_double(r.tail_mass) << ','
        << format_double(r.h1_u) << ',' << format_double(r.h1_v2) << ',' << format_double(r.w2_prev) << ','
        << format_double(r.energy4) << '\n';
  }
}

void write_estimates(const fs::path& file, const std::vector<EstimateReport>& reports) {
  auto out = open_out(file);
  out << "name,fitted_level,fitted_rate,gate,pass\n";
  for (const auto& r : reports)
    out << r.name << ',' << format_double(r.fitted_level) << ',' << format_double(r.fitted_rate) << ','
        << format_double(r.gate) << ',' << (r.pass ? 1 : 0) << '\n';
}

void write_assumptions(const fs::path& file, const AssumptionReport& report) {
  auto out = open_out(file);
  out << "inequality,worst_violation,sample_count,t,x,y,u,u2,m2,m2b\n";
  for (const auto& r : report.records) {
    const Witness& w = r.witness;
    out << r.name << ',' << format_double(r.worst_violation) << ',' << r.sample_count << ',' << format_double(w.t)
        << ',' << format_double(w.x) << ',' << format_double(w.y) << ',' << format_double(w.u) << ','
        << format_double(w.u2) << ',' << format_double(w.m2) << ',' << format_double(w.m2b) << '\n';
  }
}

void write_pullback(const fs::path& file, const PullbackReport& report) {
  auto out = open_out(file);
  out << "depth,m2,m4,tail,in_ball,w2_prev,dP_prev,floor\n";
  for (const auto& r : report.records)
    out << format_double(r.depth) << ',' << format_double(r.m2) << ',' << format_double(r.m4) << ','
        << format_double(r.tail) << ',' << (r.in_ball ? 1 : 0) << ',' << format_double(r.w2_prev) << ','
        << format_double(r.dP_prev) << ',' << format_double(r.floor) << '\n';
}

void write_picard(const fs::path& file, const PicardResult& result) {
  auto out = open_out(file);
  out << "iteration,distance,ratio\n";
  for (std::size_t m = 0; m < result.distances.size(); ++m) {
    const double ratio = m >= 1 && m - 1 < result.ratios.size() ? result.ratios[m - 1] : std::nan("");
    out << m << ',' << format_double(result.distances[m]) << ',' << format_double(ratio) << '\n';
  }
}

// ---------------------------------------------------------------------------

RunConfig::RunConfig() {
  values_ = {
      {"model.kind", "canonical"},
      {"model.lambda", "1"},
      {"model.alpha", "1"},
      {"model.beta", "1"},
      {"model.gamma", ""},
      {"model.eps_couple", "0.1"},
      {"model.K", "16"},
      {"model.omega", "1"},
      {"model.p", "4"},
      {"model.forcing_u", "1"},
      {"model.forcing_v", "1"},
      {"model.eta", "0.1"},
      {"model.auto_scale", "true"},
      {"grid.n", "1"},
      {"grid.L", "8"},
      {"grid.N", "129"},
      {"scheme.dt", "0.01"},
      {"scheme.M", "128"},
      {"scheme.kind", "semi_implicit"},
      {"scheme.checkpoint_stride", "10"},
      {"scheme.t_end", "10"},
      {"scheme.noise", "true"},
      {"scheme.implicit_nonlinearity", "false"},
      {"scheme.initial_family", "gaussian"},
      {"scheme.initial_scale", "1"},
      {"scheme.tail_radius", ""},
      {"check.samples", "100000"},
      {"check.tolerance", "1e-6"},
      {"picard.T", "1"},
      {"picard.dt", "0.001"},
      {"picard.M", "2048"},
      {"picard.tol", "1e-4"},
      {"picard.max_iters", "8"},
      {"picard.eta", "10"},
      {"pullback.tau", "0"},
      {"pullback.depths", "5,10,20,40"},
      {"pullback.family", "bounded"},
      {"pullback.replicates", "8"},
      {"pullback.calibration_time", "20"},
      {"pullback.members", "64"},
      {"output.dir", "out"},
  };
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'", line);
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + file.string(), file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'", key);
  it->second = value;
}

void RunConfig::apply_environment(const std::vector<std::string>& env) {
  const std::string prefix = "MVFHN_";
  for (const auto& entry : env) {
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = lower(entry.substr(prefix.size(), eq - prefix.size()));
    const std::string value = entry.substr(eq + 1);
    const auto us = name.find('_');
    const std::string key = us == std::string::npos ? name : name.substr(0, us) + "." + name.substr(us + 1);
    bool matched = false;
    for (auto& [known, slot] : values_) {
      if (lower(known) == key) {
        slot = value;
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("unknown config key from environment '" + entry.substr(0, eq) + "'", key);
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'", key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a number, got '" + s + "'", key);
  }
}

long RunConfig::get_int(const std::string& key) const {
  const std::string& s = get(key);
  const double v = get_double(key);
  if (v != std::floor(v) || std::abs(v) > 9e15)
    throw ConfigError("config key '" + key + "' needs an integer, got '" + s + "'", key);
  return static_cast<long>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string s = lower(get(key));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "' needs true or false, got '" + s + "'", key);
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' needs a comma-separated list of numbers", key);
    }
  }
  return out;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

void RunManifest::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

void RunManifest::write() const {
  auto out = open_out(file_);
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

std::string git_describe() { return MVFHN_GIT_DESCRIBE; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace mvfhn
