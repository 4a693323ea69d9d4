#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "decompart/model.hpp"
#include "decompart/pathflow.hpp"
#include "decompart/static_analysis.hpp"

namespace decompart {

/// A loaded model document: a dynamic model, a static dataset, or both.
struct LoadedDocument {
  std::string name;
  std::vector<std::string> compartments;
  std::optional<CompartmentalModel> model;
  std::optional<StaticSystem> static_system;
  std::vector<PathSpec> paths;  // declared in the document
};

LoadedDocument load_model(const std::filesystem::path& path);
LoadedDocument load_model_from_string(const std::string& text, const std::string& origin);

std::string save_model(const LoadedDocument& doc);

/// One plot-ready table: a leading time column plus named value columns.
/// Matrix series are flattened column-major with headers like `X[2,1]`.
struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  static Table matrix_series(const std::string& name, const std::string& symbol,
                             const std::vector<double>& times,
                             const std::vector<MatrixXd>& series);
  static Table vector_series(const std::string& name, const std::vector<std::string>& columns,
                             const std::vector<double>& times,
                             const std::vector<VectorXd>& series);
  static Table single_matrix(const std::string& name, const std::string& symbol, double t,
                             const MatrixXd& m);
};

struct ResultBundle {
  std::string run_name;
  std::string command;
  std::string engine_version;
  std::string config_json;  // serialized run configuration echo
  std::vector<Table> tables;
  std::vector<std::string> flags;  // degeneracies, truncations, notices
};

/// Writes one CSV per table plus manifest.json. Floats are printed with 17
/// significant digits so they round-trip to bit-identical doubles.
void emit_tables(const ResultBundle& bundle, const std::filesystem::path& dir);

std::string format_double(double v);

}  // namespace decompart
