/// @file
/// @brief CSV export of trajectories and tidy per-figure tables.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/dynamics.hpp"
#include "proxcmo/integrate.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

namespace proxcmo {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// `t,x0..,a0..,l0..,res_stat,res_feas,obj` for the given block sizes.
inline std::vector<std::string> trajectory_columns(const StateLayout &layout) {
  std::vector<std::string> cols{"t"};
  for (Eigen::Index i = 0; i < layout.n; ++i)
    cols.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < layout.n_alpha; ++i)
    cols.push_back("a" + std::to_string(i));
  for (Eigen::Index i = 0; i < layout.m; ++i)
    cols.push_back("l" + std::to_string(i));
  cols.insert(cols.end(), {"res_stat", "res_feas", "obj"});
  return cols;
}

inline std::string join(const std::vector<std::string> &items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i)
      out += sep;
    out += items[i];
  }
  return out;
}

/// Write one row per recorded sample. The trajectory must carry the
/// res_stat, res_feas and obj metrics.
inline void write_trajectory_csv(std::ostream &os, const Trajectory &traj,
                                 const StateLayout &layout) {
  static const char *const kMetrics[] = {"res_stat", "res_feas", "obj"};
  for (const char *name : kMetrics)
    if (!traj.metrics.count(name))
      throw InvalidArgument(std::string("write_trajectory_csv: missing metric ") + name);
  os << join(trajectory_columns(layout)) << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vec &y = traj.states[k];
    detail::require_size(y.size(), layout.size(), "write_trajectory_csv: state");
    std::string line = format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      line += ',';
      line += format_double(y[i]);
    }
    for (const char *name : kMetrics) {
      line += ',';
      line += format_double(traj.metrics.at(name)[k]);
    }
    os << line << '\n';
  }
}

inline void write_trajectory_csv(const std::string &path, const Trajectory &traj,
                                 const StateLayout &layout) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot open '" + path + "' for writing");
  write_trajectory_csv(os, traj, layout);
}

/// Long-format table: a fixed header and rows appended as text cells.
class TidyTable {
public:
  explicit TidyTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(const std::vector<std::string> &cells) {
    detail::require(cells.size() == columns_.size(), "TidyTable: wrong number of cells");
    rows_.push_back(join(cells));
  }

  bool empty() const { return rows_.empty(); }

  void write(const std::string &path) const {
    std::ofstream os(path);
    if (!os)
      throw Error("cannot open '" + path + "' for writing");
    os << join(columns_) << '\n';
    for (const std::string &r : rows_)
      os << r << '\n';
  }

private:
  std::vector<std::string> columns_;
  std::vector<std::string> rows_;
};

} // namespace proxcmo
