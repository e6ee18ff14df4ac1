#pragma once

#include "prewarp/bench.hpp"
#include "prewarp/local.hpp"
#include "prewarp/sensitivity.hpp"
#include "prewarp/warp.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace prewarp {

enum class WarpKind { none, bandwidth, range, lebesgue, sample };
enum class ModelKind { knn, local_gp, vecchia, subset_gp };

std::string warp_kind_prefix(WarpKind kind);  // "", "B", "R", "L", "S"
std::string model_kind_name(ModelKind kind);  // "KNN", "laGP", "vecc", "sGP"

/// One experiment cell: optional warp prefix, optional truncation, model.
struct MethodSpec {
  WarpKind warp = WarpKind::none;
  bool truncate = false;
  ModelKind model = ModelKind::knn;
  std::string label;  // canonical form, e.g. "ST-laGP"
};

/// Parses a Fig-style method label: optional prefix B|R|L|S, optional T,
/// then KNN | laGP | vecc | sGP. Throws ContractError with the grammar on
/// malformed input.
MethodSpec parse_method_label(const std::string& label);

std::vector<MethodSpec> parse_method_list(const std::string& comma_separated);

struct LocalDefaults {
  int knn_k = 10;
  int lagp_kappa = 6;
  Index lagp_n_max = 50;
  int lagp_pool = 10;
  int vecc_m = 30;
  VecchiaOrdering vecc_ordering = VecchiaOrdering::maxmin;
};

struct ExperimentConfig {
  // data source: either a registered test function or a CSV file
  std::string function;  // empty when reading CSV
  int fn_dim = 0;        // linear-embed only
  std::string csv_path;
  std::string response_column = "y";

  Index n_train = 1000;
  Index n_test = 200;
  std::vector<MethodSpec> methods;

  SubbagConfig bags;  // seed is derived per repetition
  int n_mc = 1000;    // lebesgue Monte Carlo draws
  FitConfig fit;
  LocalDefaults local;

  int mind = 1;
  int maxd = 0;  // 0 = input dimension
  int trunc_k = 10;

  int reps = 10;
  std::uint64_t seed = 0;
  bool resample_design = true;  // false: one design, fresh split per repetition
  bool timings = false;         // false keeps output files reproducible

  // test instrumentation, not used by the CLI
  std::function<void(int rep, const Matrix& X_train, const Matrix& X_test)> on_split;
  std::function<void(int rep, const Matrix& X_sens)> on_sensitivity_input;
};

struct MetricsReport {
  std::string label;
  int rep = 0;
  double mse = 0.0;
  std::optional<double> neg_score;
  int r_used = 0;
  Index n_train = 0;
  Index n_test = 0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
};

struct RepWarp {
  int rep = 0;
  WarpKind kind = WarpKind::none;
  WarpTransform warp;
};

struct ExperimentResult {
  std::vector<MetricsReport> reports;
  std::vector<RepWarp> warps;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

struct LabelSummary {
  std::string label;
  double median_mse = 0.0;
  std::optional<double> median_neg_score;
  int n_ok = 0;
  int n_failed = 0;
};

std::vector<LabelSummary> summarize(const std::vector<MetricsReport>& reports);

/// One JSON object per line, keys sorted, doubles round-trip exactly.
std::string report_to_json_line(const MetricsReport& report);
std::string summary_to_json(const ExperimentConfig& config,
                            const std::vector<LabelSummary>& summary);
std::string config_to_json(const ExperimentConfig& config);

struct CsvData {
  Matrix X;
  Vector y;
  std::vector<std::string> columns;  // input column names, response excluded
};

/// Reads a numeric CSV with a header row; the response column is selected by
/// name and the remaining columns become inputs, unscaled.
CsvData ingest_csv(const std::string& path, const std::string& response_column);

void write_csv(const std::string& path, const Matrix& X, const Vector& y,
               const std::vector<std::string>& columns, const std::string& response_column);

/// Per-column min-max scaling fitted on training rows; constant columns map
/// to 0.5 (with a warning).
struct MinMaxScale {
  Vector lo;
  Vector hi;
  static MinMaxScale fit(const Matrix& X_train);
  Matrix apply(const Matrix& X) const;
};

}  // namespace prewarp
