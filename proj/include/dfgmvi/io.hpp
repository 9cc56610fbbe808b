#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfgmvi/metrics.hpp"
#include "dfgmvi/mixture.hpp"
#include "dfgmvi/solver.hpp"

namespace dfgmvi {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

/// Trace CSV: header then one RFC-4180 (CRLF) row per iteration with the
/// per-component weights, residual aggregates, and the TV column where
/// available (empty field otherwise).
struct TraceRow {
  int iteration = 0;
  Vector weights;
  std::optional<double> grad_residual;
  std::optional<double> hess_residual;
  std::optional<double> spread;
  std::optional<double> tv;
};

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows);

void write_mixture_json(const std::filesystem::path& path, const GaussianMixture& mix);
GaussianMixture read_mixture_json(const std::filesystem::path& path);

/// Grid CSV: "x,value" or "x,y,value" rows in grid order.
void write_grid_csv(const std::filesystem::path& path, const GridDensity& g);

/// Flat binary: row-major little-endian doubles, plus a JSON header file
/// (same stem, .json) describing the axes.
void write_grid_binary(const std::filesystem::path& data_path, const GridDensity& g);

/// Field snapshot: row-major doubles with a JSON header carrying grid_n.
void write_field_binary(const std::filesystem::path& data_path, const Vector& field,
                        int grid_n);

}  // namespace dfgmvi
