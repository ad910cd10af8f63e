#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anisoflow/error.hpp"

namespace anisoflow {

struct ContactData {
  double x_left = 0.0;
  double x_right = 0.0;
  double theta_left = 0.0;
  double theta_right = 0.0;
};

struct RecordRow {
  double t = 0.0;
  double area = 0.0;
  double energy = 0.0;
  double mesh_ratio = 1.0;
  int newton_iters = 0;
  std::optional<ContactData> contact;
};

/// Per-step diagnostics of one run. Rows are time ordered and either all carry
/// contact data or none do.
struct RunRecord {
  std::vector<RecordRow> rows;
  std::map<std::string, std::string> meta;

  bool has_contact() const { return !rows.empty() && rows.front().contact.has_value(); }

  void append(RecordRow row) {
    if (!rows.empty()) {
      if (!(row.t > rows.back().t)) throw ArgumentError("run record: times must increase");
      if (row.contact.has_value() != rows.back().contact.has_value())
        throw ArgumentError("run record: row schema changed");
    }
    rows.push_back(std::move(row));
  }
};

/// A step failed during evolve; carries the rows recorded so far.
class RunFailure : public StepFailure {
 public:
  RunFailure(const StepFailure& cause, RunRecord partial)
      : StepFailure(cause.what(), cause.residual_history()), record_(std::move(partial)) {}
  RunFailure(const std::string& what, RunRecord partial)
      : StepFailure(what), record_(std::move(partial)) {}
  const RunRecord& partial_record() const noexcept { return record_; }

 private:
  RunRecord record_;
};

struct IndicatorRow {
  double t = 0.0;
  double area_loss = 0.0;
  double energy_ratio = 1.0;
};

/// (A^m - A^0)/A^0 and W^m/W^0 for every row.
inline std::vector<IndicatorRow> normalized_indicators(const RunRecord& rec) {
  if (rec.rows.empty()) throw ArgumentError("normalized_indicators: empty record");
  const double a0 = rec.rows.front().area;
  const double w0 = rec.rows.front().energy;
  if (a0 == 0.0) throw ArgumentError("normalized_indicators: initial area is zero");
  if (w0 == 0.0) throw ArgumentError("normalized_indicators: initial energy is zero");
  std::vector<IndicatorRow> out;
  out.reserve(rec.rows.size());
  for (const auto& r : rec.rows) out.push_back({r.t, (r.area - a0) / a0, r.energy / w0});
  return out;
}

}  // namespace anisoflow
