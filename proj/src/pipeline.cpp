#include "prewarp/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace prewarp {

namespace {

using nlohmann::json;

constexpr std::uint64_t kRepStream = 0x4E9;
constexpr std::uint64_t kDesignStream = 0xDE5;
constexpr std::uint64_t kSplitStream = 0x5B1;
constexpr std::uint64_t kBagStream = 0xBA65;
constexpr std::uint64_t kMcStream = 0x3CA;
constexpr std::uint64_t kCellStream = 0xCE11;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const char* kGrammarMessage =
    "method labels follow [B|R|L|S][T]-MODEL or MODEL, where MODEL is one of "
    "KNN, laGP, vecc, sGP (sGP is a global baseline and takes no prefix); "
    "examples: KNN, S-KNN, ST-laGP, T-vecc";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

json double_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

struct SplitData {
  Matrix X_train, X_test;
  Vector y_train, y_test;
};

Matrix take_rows(const Matrix& X, const std::vector<Index>& idx, Index from, Index count) {
  Matrix out(count, X.cols());
  for (Index i = 0; i < count; ++i) out.row(i) = X.row(idx[static_cast<std::size_t>(from + i)]);
  return out;
}

Vector take_entries(const Vector& y, const std::vector<Index>& idx, Index from, Index count) {
  Vector out(count);
  for (Index i = 0; i < count; ++i) out[i] = y[idx[static_cast<std::size_t>(from + i)]];
  return out;
}

}  // namespace

std::string warp_kind_prefix(WarpKind kind) {
  switch (kind) {
    case WarpKind::none: return "";
    case WarpKind::bandwidth: return "B";
    case WarpKind::range: return "R";
    case WarpKind::lebesgue: return "L";
    case WarpKind::sample: return "S";
  }
  throw ContractError("warp_kind_prefix: unknown kind");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::knn: return "KNN";
    case ModelKind::local_gp: return "laGP";
    case ModelKind::vecchia: return "vecc";
    case ModelKind::subset_gp: return "sGP";
  }
  throw ContractError("model_kind_name: unknown kind");
}

namespace {

std::optional<ModelKind> model_from_token(const std::string& token) {
  const std::string m = lower(token);
  if (m == "knn") return ModelKind::knn;
  if (m == "lagp" || m == "local-gp") return ModelKind::local_gp;
  if (m == "vecc" || m == "vecchia") return ModelKind::vecchia;
  if (m == "sgp" || m == "subset-gp") return ModelKind::subset_gp;
  return std::nullopt;
}

}  // namespace

MethodSpec parse_method_label(const std::string& label) {
  MethodSpec spec;
  auto fail = [&]() -> ContractError {
    return ContractError("bad method label '" + label + "': " + kGrammarMessage);
  };

  if (auto bare = model_from_token(label)) {
    spec.model = *bare;
  } else {
    const auto dash = label.find('-');
    if (dash == std::string::npos || dash == 0 || dash > 2) throw fail();
    std::string prefix = label.substr(0, dash);
    std::transform(prefix.begin(), prefix.end(), prefix.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    auto model = model_from_token(label.substr(dash + 1));
    if (!model) throw fail();
    spec.model = *model;

    switch (prefix[0]) {
      case 'B': spec.warp = WarpKind::bandwidth; prefix.erase(0, 1); break;
      case 'R': spec.warp = WarpKind::range; prefix.erase(0, 1); break;
      case 'L': spec.warp = WarpKind::lebesgue; prefix.erase(0, 1); break;
      case 'S': spec.warp = WarpKind::sample; prefix.erase(0, 1); break;
      default: break;
    }
    if (prefix == "T")
      spec.truncate = true;
    else if (!prefix.empty())
      throw fail();
  }
  if (spec.model == ModelKind::subset_gp && (spec.warp != WarpKind::none || spec.truncate))
    throw fail();

  spec.label = warp_kind_prefix(spec.warp) + (spec.truncate ? "T" : "");
  if (!spec.label.empty()) spec.label += "-";
  spec.label += model_kind_name(spec.model);
  return spec;
}

std::vector<MethodSpec> parse_method_list(const std::string& comma_separated) {
  std::vector<MethodSpec> out;
  std::stringstream ss(comma_separated);
  std::string token;
  while (std::getline(ss, token, ',')) {
    // trim surrounding whitespace
    const auto a = token.find_first_not_of(" \t");
    const auto b = token.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(parse_method_label(token.substr(a, b - a + 1)));
  }
  if (out.empty()) throw ContractError(std::string("empty method list: ") + kGrammarMessage);
  return out;
}

namespace {

// Everything one repetition shares across its method cells.
struct RepContext {
  SplitData data;
  std::vector<std::pair<WarpKind, WarpTransform>> warps;
  std::vector<std::pair<WarpKind, int>> selected_r;

  const WarpTransform& warp_for(WarpKind kind) const {
    for (const auto& [k, w] : warps)
      if (k == kind) return w;
    throw ContractError("internal: warp not prepared");
  }
  int r_for(WarpKind kind) const {
    for (const auto& [k, r] : selected_r)
      if (k == kind) return r;
    throw ContractError("internal: truncation rank not prepared");
  }
};

SplitData make_split(const ExperimentConfig& config, int rep, std::uint64_t rep_seed) {
  SplitData split;
  if (!config.function.empty()) {
    TestFunction fn = lookup_function(config.function, config.fn_dim);
    const Index total = config.n_train + config.n_test;
    const std::uint64_t design_seed =
        config.resample_design ? mix_seed(rep_seed, kDesignStream) : mix_seed(config.seed, kDesignStream);
    Matrix X_all = lhs_sample(total, fn.dim, design_seed);
    Vector y_all = eval_function(fn, X_all);
    std::vector<Index> perm(static_cast<std::size_t>(total));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(mix_seed(rep_seed, kSplitStream));
    shuffle(perm, rng);
    split.X_train = take_rows(X_all, perm, 0, config.n_train);
    split.y_train = take_entries(y_all, perm, 0, config.n_train);
    split.X_test = take_rows(X_all, perm, config.n_train, config.n_test);
    split.y_test = take_entries(y_all, perm, config.n_train, config.n_test);
    return split;
  }

  CsvData data = ingest_csv(config.csv_path, config.response_column);
  const Index total = data.X.rows();
  if (config.n_train + config.n_test > total) {
    std::ostringstream msg;
    msg << "requested " << config.n_train << "+" << config.n_test << " rows but the file has "
        << total;
    throw DataError(msg.str());
  }
  std::vector<Index> perm(static_cast<std::size_t>(total));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(mix_seed(rep_seed, kSplitStream));
  shuffle(perm, rng);
  Matrix X_train_raw = take_rows(data.X, perm, 0, config.n_train);
  Matrix X_test_raw = take_rows(data.X, perm, config.n_train, config.n_test);
  MinMaxScale scale = MinMaxScale::fit(X_train_raw);
  split.X_train = scale.apply(X_train_raw);
  split.X_test = scale.apply(X_test_raw);
  split.y_train = take_entries(data.y, perm, 0, config.n_train);
  split.y_test = take_entries(data.y, perm, config.n_train, config.n_test);
  (void)rep;
  return split;
}

WarpProvenance provenance_for(const ExperimentConfig& config, const SubbagConfig& bags,
                              std::uint64_t rep_seed, WarpKind kind) {
  WarpProvenance prov;
  prov.seed = rep_seed;
  prov.n = config.n_train;
  prov.n_bags = bags.n_bags;
  prov.bag_size = bags.bag_size;
  switch (kind) {
    case WarpKind::lebesgue: prov.measure = "lebesgue"; break;
    case WarpKind::sample: prov.measure = "sample"; break;
    default: prov.measure = ""; break;
  }
  return prov;
}

// Computes every warp the method list needs, sharing per-bag fits between
// the two rotation measures.
std::vector<std::pair<WarpKind, WarpTransform>> prepare_warps(const ExperimentConfig& config,
                                                              const RepContext& ctx, int rep,
                                                              std::uint64_t rep_seed) {
  bool need_b = false, need_r = false, need_l = false, need_s = false, need_id = false;
  for (const MethodSpec& m : config.methods) {
    switch (m.warp) {
      case WarpKind::bandwidth: need_b = true; break;
      case WarpKind::range: need_r = true; break;
      case WarpKind::lebesgue: need_l = true; break;
      case WarpKind::sample: need_s = true; break;
      case WarpKind::none:
        if (m.truncate) need_id = true;
        break;
    }
  }

  const Matrix& X = ctx.data.X_train;
  const Vector& y = ctx.data.y_train;
  if ((need_b || need_r || need_l || need_s) && config.on_sensitivity_input)
    config.on_sensitivity_input(rep, X);

  SubbagConfig bags = config.bags;
  bags.seed = mix_seed(rep_seed, kBagStream);
  if (bags.bag_size > X.rows()) {
    std::cerr << "warning: bag size " << bags.bag_size << " exceeds training size " << X.rows()
              << "; shrinking\n";
    bags.bag_size = X.rows();
  }

  std::vector<std::pair<WarpKind, WarpTransform>> out;
  if (need_id) out.emplace_back(WarpKind::none, WarpTransform::identity(static_cast<int>(X.cols())));
  if (need_b) {
    WarpTransform w = build_L_ard(subbag_ard(X, y, bags, config.fit));
    w.created_from = provenance_for(config, bags, rep_seed, WarpKind::bandwidth);
    out.emplace_back(WarpKind::bandwidth, std::move(w));
  }
  if (need_r) {
    WarpTransform w = build_L_range(subbag_range(X, y, bags, config.fit));
    w.created_from = provenance_for(config, bags, rep_seed, WarpKind::range);
    out.emplace_back(WarpKind::range, std::move(w));
  }
  if (need_l || need_s) {
    std::vector<MeasureSpec> measures;
    std::vector<WarpKind> kinds;
    if (need_l) {
      MeasureSpec leb;
      leb.kind = MeasureKind::lebesgue;
      leb.n_mc = config.n_mc;
      leb.seed = mix_seed(rep_seed, kMcStream);
      measures.push_back(leb);
      kinds.push_back(WarpKind::lebesgue);
    }
    if (need_s) {
      MeasureSpec smp;
      smp.kind = MeasureKind::sample;
      measures.push_back(smp);
      kinds.push_back(WarpKind::sample);
    }
    std::vector<CMatrix> cs = subbag_C_multi(X, y, measures, bags, config.fit);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      WarpTransform w = build_L_as(cs[i]);
      w.created_from = provenance_for(config, bags, rep_seed, kinds[i]);
      out.emplace_back(kinds[i], std::move(w));
    }
  }
  return out;
}

MetricsReport run_cell(const ExperimentConfig& config, const RepContext& ctx,
                       const MethodSpec& method, int rep, std::uint64_t cell_seed) {
  MetricsReport report;
  report.label = method.label;
  report.rep = rep;
  report.n_train = ctx.data.X_train.rows();
  report.n_test = ctx.data.X_test.rows();
  report.seed = cell_seed;

  const int p = static_cast<int>(ctx.data.X_train.cols());
  int r = p;
  Matrix Z_train, Z_test;
  if (method.model == ModelKind::subset_gp) {
    Z_train = ctx.data.X_train;
    Z_test = ctx.data.X_test;
  } else if (method.warp == WarpKind::none && !method.truncate) {
    Z_train = ctx.data.X_train;
    Z_test = ctx.data.X_test;
  } else {
    const WarpTransform& warp = ctx.warp_for(method.warp);
    if (method.truncate) r = ctx.r_for(method.warp);
    Z_train = apply_warp(ctx.data.X_train, warp, r);
    Z_test = apply_warp(ctx.data.X_test, warp, r);
  }
  report.r_used = r;

  const Vector& y_train = ctx.data.y_train;
  const Vector& y_test = ctx.data.y_test;
  const double y_var = (y_train.array() - y_train.mean()).square().sum() /
                       static_cast<double>(y_train.size());

  switch (method.model) {
    case ModelKind::knn: {
      Vector pred = knn_predict_batch(Z_train, y_train, Z_test, config.local.knn_k);
      report.mse = mse(pred, y_test);
      break;
    }
    case ModelKind::local_gp: {
      LocalConfig lc;
      lc.model = LocalModelKind::local_gp;
      lc.k = config.local.lagp_kappa;
      lc.n_max = config.local.lagp_n_max;
      lc.candidate_pool = config.local.lagp_pool;
      KernelSpec spec0 = KernelSpec::isotropic(static_cast<int>(Z_train.cols()),
                                               mean_sq_spacing(Z_train) / 10.0,
                                               std::max(y_var, 1e-12), 1e-6 * std::max(y_var, 1e-12));
      PredictiveDist pred = local_gp_predict_batch(Z_train, y_train, Z_test, lc, spec0);
      report.mse = mse(pred.mean, y_test);
      report.neg_score = neg_log_score(pred, y_test);
      break;
    }
    case ModelKind::vecchia: {
      LocalConfig lc;
      lc.model = LocalModelKind::vecchia;
      lc.cond_size = config.local.vecc_m;
      lc.ordering = config.local.vecc_ordering;
      lc.seed = cell_seed;
      KernelSpec spec0;
      spec0.family = KernelFamily::separable_gaussian;
      spec0.lengthscales.resize(Z_train.cols());
      for (Index k = 0; k < Z_train.cols(); ++k) {
        const double col_var = (Z_train.col(k).array() - Z_train.col(k).mean()).square().sum() /
                               static_cast<double>(Z_train.rows());
        spec0.lengthscales[k] = std::max(col_var, 1e-6);
      }
      spec0.signal_variance = std::max(y_var, 1e-12);
      spec0.nugget = 1e-4 * spec0.signal_variance;
      VecchiaModel model = vecchia_fit(Z_train, y_train, lc, spec0);
      PredictiveDist pred = vecchia_predict_batch(model, Z_test);
      report.mse = mse(pred.mean, y_test);
      report.neg_score = neg_log_score(pred, y_test);
      break;
    }
    case ModelKind::subset_gp: {
      const Index size = std::min<Index>(config.bags.bag_size, Z_train.rows());
      Rng rng(mix_seed(cell_seed, 0x56B));
      std::vector<Index> subset = sample_without_replacement(Z_train.rows(), size, rng);
      Matrix Xs(size, Z_train.cols());
      Vector ys(size);
      for (Index i = 0; i < size; ++i) {
        Xs.row(i) = Z_train.row(subset[static_cast<std::size_t>(i)]);
        ys[i] = y_train[subset[static_cast<std::size_t>(i)]];
      }
      FitConfig fc = config.fit;
      fc.seed = mix_seed(cell_seed, 0x6F1);
      GPModel model = fit_gp(Xs, ys, fc);
      PredictiveDist pred = predict(model, Z_test, true);
      report.mse = mse(pred.mean, y_test);
      report.neg_score = neg_log_score(pred, y_test);
      break;
    }
  }
  return report;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.methods.empty()) throw ContractError("run_experiment: empty method list");
  if (config.function.empty() == config.csv_path.empty())
    throw ContractError("run_experiment: exactly one data source (function or CSV) required");
  if (config.n_test < 1 || config.n_train < 1)
    throw ContractError("run_experiment: need positive train and test sizes");
  if (config.reps < 1) throw ContractError("run_experiment: reps must be positive");

  ExperimentResult result;
  for (int rep = 0; rep < config.reps; ++rep) {
    const std::uint64_t rep_seed = mix_seed(config.seed, kRepStream, static_cast<std::uint64_t>(rep));
    RepContext ctx;
    ctx.data = make_split(config, rep, rep_seed);
    if (config.on_split) config.on_split(rep, ctx.data.X_train, ctx.data.X_test);

    ctx.warps = prepare_warps(config, ctx, rep, rep_seed);

    // one truncation rank per warp per repetition, shared by all local models
    const int p = static_cast<int>(ctx.data.X_train.cols());
    const int maxd = config.maxd > 0 ? std::min(config.maxd, p) : p;
    for (const auto& [kind, warp] : ctx.warps) {
      bool truncated_use = false;
      for (const MethodSpec& m : config.methods)
        if (m.warp == kind && m.truncate) truncated_use = true;
      if (!truncated_use) continue;
      Matrix Z_full = apply_warp(ctx.data.X_train, warp, p);
      ctx.selected_r.emplace_back(
          kind, select_truncation(Z_full, ctx.data.y_train, config.mind, maxd, config.trunc_k));
    }

    for (const auto& [kind, warp] : ctx.warps)
      if (kind != WarpKind::none) result.warps.push_back({rep, kind, warp});

    for (const MethodSpec& method : config.methods) {
      const std::uint64_t cell_seed = mix_seed(rep_seed, kCellStream, fnv1a(method.label));
      const auto t0 = std::chrono::steady_clock::now();
      MetricsReport report;
      try {
        report = run_cell(config, ctx, method, rep, cell_seed);
      } catch (const std::exception& e) {
        report.label = method.label;
        report.rep = rep;
        report.n_train = ctx.data.X_train.rows();
        report.n_test = ctx.data.X_test.rows();
        report.seed = cell_seed;
        report.failed = true;
        report.error = e.what();
        report.mse = std::numeric_limits<double>::quiet_NaN();
        std::cerr << "warning: cell " << method.label << " rep " << rep << " failed: " << e.what()
                  << "\n";
      }
      if (config.timings) {
        const auto t1 = std::chrono::steady_clock::now();
        report.seconds = std::chrono::duration<double>(t1 - t0).count();
      }
      result.reports.push_back(std::move(report));
    }
  }
  return result;
}

std::vector<LabelSummary> summarize(const std::vector<MetricsReport>& reports) {
  std::vector<LabelSummary> out;
  auto find = [&](const std::string& label) -> LabelSummary& {
    for (auto& s : out)
      if (s.label == label) return s;
    out.push_back({label, 0.0, std::nullopt, 0, 0});
    return out.back();
  };
  // keyed by first appearance to keep config order
  std::vector<std::string> order;
  for (const auto& r : reports)
    if (std::find(order.begin(), order.end(), r.label) == order.end()) order.push_back(r.label);

  for (const std::string& label : order) {
    LabelSummary& s = find(label);
    std::vector<double> mses, scores;
    for (const auto& r : reports) {
      if (r.label != label) continue;
      if (r.failed) {
        ++s.n_failed;
        continue;
      }
      ++s.n_ok;
      mses.push_back(r.mse);
      if (r.neg_score) scores.push_back(*r.neg_score);
    }
    s.median_mse = median_of(mses);
    if (!scores.empty()) s.median_neg_score = median_of(scores);
  }
  return out;
}

std::string report_to_json_line(const MetricsReport& report) {
  json j;
  j["label"] = report.label;
  j["rep"] = report.rep;
  j["mse"] = double_or_null(report.mse);
  j["neg_score"] = report.neg_score ? json(*report.neg_score) : json(nullptr);
  j["r_used"] = report.r_used;
  j["n_train"] = report.n_train;
  j["n_test"] = report.n_test;
  j["seconds"] = report.seconds;
  j["seed"] = report.seed;
  if (report.failed) {
    j["failed"] = true;
    j["error"] = report.error;
  }
  return j.dump();
}

std::string config_to_json(const ExperimentConfig& config) {
  json j;
  if (!config.function.empty()) {
    j["fn"] = config.function;
    if (config.fn_dim > 0) j["dim"] = config.fn_dim;
  } else {
    j["csv"] = config.csv_path;
    j["response"] = config.response_column;
  }
  j["n_train"] = config.n_train;
  j["n_test"] = config.n_test;
  std::vector<std::string> labels;
  for (const auto& m : config.methods) labels.push_back(m.label);
  j["methods"] = labels;
  j["bags"] = {{"B", config.bags.n_bags}, {"nsub", config.bags.bag_size}};
  j["n_mc"] = config.n_mc;
  j["fit"] = {{"n_starts", config.fit.n_starts}, {"max_iters", config.fit.max_iters}};
  j["local"] = {{"knn_k", config.local.knn_k},
                {"lagp_kappa", config.local.lagp_kappa},
                {"lagp_n_max", config.local.lagp_n_max},
                {"lagp_pool", config.local.lagp_pool},
                {"vecc_m", config.local.vecc_m}};
  j["mind"] = config.mind;
  j["maxd"] = config.maxd;
  j["trunc_k"] = config.trunc_k;
  j["reps"] = config.reps;
  j["seed"] = config.seed;
  j["resample_design"] = config.resample_design;
  j["timings"] = config.timings;
  return j.dump();
}

std::string summary_to_json(const ExperimentConfig& config,
                            const std::vector<LabelSummary>& summary) {
  json j;
  j["config"] = json::parse(config_to_json(config));
  json labels = json::object();
  for (const auto& s : summary) {
    labels[s.label] = {{"median_mse", double_or_null(s.median_mse)},
                       {"median_neg_score",
                        s.median_neg_score ? json(*s.median_neg_score) : json(nullptr)},
                       {"ok", s.n_ok},
                       {"failed", s.n_failed}};
  }
  j["labels"] = labels;
  return j.dump();
}

CsvData ingest_csv(const std::string& path, const std::string& response_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path);

  auto split_line = [](const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
      std::size_t a = field.find_first_not_of(' ');
      fields.push_back(a == std::string::npos ? "" : field.substr(a));
    }
    return fields;
  };

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file: " + path);
  std::vector<std::string> header = split_line(line);
  if (header.size() < 2) throw DataError("CSV needs at least two columns (inputs and response)");

  Index y_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == response_column) y_col = static_cast<Index>(c);
  if (y_col < 0) throw DataError("response column '" + response_column + "' not found in " + path);

  std::vector<std::vector<double>> rows;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": expected " << header.size() << " fields, got "
          << fields.size();
      throw DataError(msg.str());
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        std::ostringstream msg;
        msg << path << ":" << line_no << ": column '" << header[c] << "': not numeric: '" << f
            << "'";
        throw DataError(msg.str());
      }
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("CSV has a header but no data rows: " + path);

  CsvData data;
  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(header.size()) - 1;
  data.X.resize(n, p);
  data.y.resize(n);
  for (std::size_t c = 0; c < header.size(); ++c)
    if (static_cast<Index>(c) != y_col) data.columns.push_back(header[c]);
  for (Index i = 0; i < n; ++i) {
    Index xi = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (static_cast<Index>(c) == y_col)
        data.y[i] = rows[static_cast<std::size_t>(i)][c];
      else
        data.X(i, xi++) = rows[static_cast<std::size_t>(i)][c];
    }
  }
  return data;
}

void write_csv(const std::string& path, const Matrix& X, const Vector& y,
               const std::vector<std::string>& columns, const std::string& response_column) {
  if (static_cast<Index>(columns.size()) != X.cols())
    throw ContractError("write_csv: column name count mismatch");
  if (X.rows() != y.size()) throw ContractError("write_csv: row count mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);

  auto fmt = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };

  for (std::size_t c = 0; c < columns.size(); ++c) out << columns[c] << ",";
  out << response_column << "\n";
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index c = 0; c < X.cols(); ++c) out << fmt(X(i, c)) << ",";
    out << fmt(y[i]) << "\n";
  }
  if (!out) throw DataError("short write to " + path);
}

MinMaxScale MinMaxScale::fit(const Matrix& X_train) {
  MinMaxScale s;
  s.lo = X_train.colwise().minCoeff();
  s.hi = X_train.colwise().maxCoeff();
  for (Index k = 0; k < s.lo.size(); ++k)
    if (s.lo[k] == s.hi[k])
      std::cerr << "warning: constant input column " << k << "; scaling to 0.5\n";
  return s;
}

Matrix MinMaxScale::apply(const Matrix& X) const {
  if (X.cols() != lo.size()) throw ContractError("MinMaxScale: dimension mismatch");
  Matrix out(X.rows(), X.cols());
  for (Index k = 0; k < X.cols(); ++k) {
    const double span = hi[k] - lo[k];
    if (span == 0.0)
      out.col(k).setConstant(0.5);
    else
      out.col(k) = (X.col(k).array() - lo[k]) / span;
  }
  return out;
}

}  // namespace prewarp
