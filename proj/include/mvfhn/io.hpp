#pragma once

// CSV persistence of laws, fields, series and reports; the flat run
// configuration and the run manifest.

#include "mvfhn/integrator.hpp"
#include "mvfhn/measure.hpp"
#include "mvfhn/model.hpp"
#include "mvfhn/pullback.hpp"
#include "mvfhn/splitting.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mvfhn {

/// 17 significant digits.
std::string format_double(double v);

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A law lives in a directory holding atoms.csv and weights.csv.
void write_law(const std::filesystem::path& dir, const EmpiricalLaw& law);
EmpiricalLaw read_law(const std::filesystem::path& dir, GridPtr grid);

void write_field(const std::filesystem::path& file, const SpatialGrid& grid, const FieldPair& k);
FieldPair read_field(const std::filesystem::path& file, const SpatialGrid& grid);

void write_series(const std::filesystem::path& file, const std::vector<SeriesRow>& series);
void write_estimates(const std::filesystem::path& file, const std::vector<EstimateReport>& reports);
void write_assumptions(const std::filesystem::path& file, const AssumptionReport& report);
void write_pullback(const std::filesystem::path& file, const PullbackReport& report);
void write_picard(const std::filesystem::path& file, const PicardResult& result);

// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key) : std::runtime_error(what), key(std::move(key)) {}
  std::string key;
};

/// Flat `section.key = value` configuration over a fixed set of known keys.
class RunConfig {
 public:
  /// Every known key with its default.
  RunConfig();

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& file);

  /// Throws ConfigError naming the key when it is unknown.
  void set(const std::string& key, const std::string& value);
  /// Applies MVFHN_<SECTION>_<KEY> variables from `env` (name=value strings).
  void apply_environment(const std::vector<std::string>& env);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;
  bool is_blank(const std::string& key) const { return get(key).empty(); }

  /// Sorted `key = value` lines.
  std::string serialize() const;
  /// FNV-1a of serialize(), 16 hex digits.
  std::string hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Key-value manifest written before a run and finalized after it.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path file) : file_(std::move(file)) {}
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void write() const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::filesystem::path file_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string git_describe();
std::string utc_timestamp();

}  // namespace mvfhn
