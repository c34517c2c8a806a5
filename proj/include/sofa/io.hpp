#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sofa/geom.hpp"
#include "sofa/train.hpp"

namespace sofa::io {

/// 17 significant digits, locale-free.
std::string format17(double v);
/// Fixed 6 decimals, locale-free.
std::string format6(double v);

void write_history_csv(std::ostream& os, std::span<const train::EpochRecord> history);

/// Columns t,x_p,y_p,alpha,dx_p,dy_p,dalpha.
void write_movement_csv(std::ostream& os, const geom::MovementSample& m);
/// Accepts the full seven-column form or just t,x_p,y_p,alpha (derivatives
/// then come from grid differences). Throws ParseError with the line number.
geom::MovementSample read_movement_csv(std::istream& is);
geom::MovementSample read_movement_csv(const std::filesystem::path& path);

/// Whole-file helpers; IoError on failure.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Run directories under a root. A run counts as completed once its
/// summary.json exists; completed runs are never touched again.
class RunRegistry {
 public:
  explicit RunRegistry(std::filesystem::path root);
  /// $SOFA_OUT if set, else "runs".
  static std::filesystem::path default_root();

  const std::filesystem::path& root() const { return root_; }
  bool completed(const std::string& run_id) const;
  /// Fresh directory for the run; a stale incomplete one is cleared first.
  /// Throws IoError when the run already completed.
  std::filesystem::path create(const std::string& run_id) const;
  void complete(const std::filesystem::path& dir, const nlohmann::json& summary) const;

 private:
  std::filesystem::path root_;
};

/// "<prefix>-<12 hex digits>" from a hash of the serialized config.
std::string derive_run_id(const std::string& prefix, const nlohmann::json& config);

}  // namespace sofa::io
