// Command-line front end: data generation, warp construction, truncation,
// single-model prediction, full experiment runs, and artifact inspection.

#include "prewarp/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace prewarp;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct DataFlags {
  std::string fn;
  int fn_dim = 0;
  std::string csv;
  std::string response = "y";
  Index n = 1000;
  std::uint64_t seed = 0;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags, bool with_n = true) {
  auto* fn_opt = cmd->add_option("--fn", flags.fn, "test function name");
  auto* csv_opt = cmd->add_option("--csv", flags.csv, "CSV input file");
  fn_opt->excludes(csv_opt);
  cmd->add_option("--dim", flags.fn_dim, "input dimension (linear-embed only)");
  cmd->add_option("--response", flags.response, "response column name")->capture_default_str();
  if (with_n) cmd->add_option("--n", flags.n, "training size")->capture_default_str();
  cmd->add_option("--seed", flags.seed, "RNG seed")->capture_default_str();
}

struct LoadedData {
  Matrix X;
  Vector y;
};

// standalone (non-pipeline) data loading: functions draw a seeded design,
// CSV inputs are min-max scaled over all rows
LoadedData load_data(const DataFlags& flags) {
  if (flags.fn.empty() == flags.csv.empty())
    throw ContractError("exactly one of --fn and --csv is required");
  LoadedData data;
  if (!flags.fn.empty()) {
    TestFunction fn = lookup_function(flags.fn, flags.fn_dim);
    data.X = lhs_sample(flags.n, fn.dim, mix_seed(flags.seed, 0xDA7A));
    data.y = eval_function(fn, data.X);
  } else {
    CsvData csv = ingest_csv(flags.csv, flags.response);
    MinMaxScale scale = MinMaxScale::fit(csv.X);
    data.X = scale.apply(csv.X);
    data.y = csv.y;
  }
  return data;
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("PREWARP_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) omp_set_num_threads(threads);
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw DataError("short write to " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

WarpKind warp_kind_from_letter(const std::string& letter) {
  if (letter == "B") return WarpKind::bandwidth;
  if (letter == "R") return WarpKind::range;
  if (letter == "L") return WarpKind::lebesgue;
  if (letter == "S") return WarpKind::sample;
  throw ContractError("--method must be one of B, R, L, S");
}

void print_spectrum(const WarpTransform& warp) {
  std::cerr << "method " << warp_method_name(warp.method) << ", eigenvalues:";
  for (Index i = 0; i < warp.eigenvalues.size(); ++i) std::cerr << " " << warp.eigenvalues[i];
  std::cerr << "\n";
  if (warp.eigenvalues.size() > 1 && warp.eigenvalues[warp.eigenvalues.size() - 1] > 0.0)
    std::cerr << "spectral spread lambda_1/lambda_p = "
              << warp.eigenvalues[0] / warp.eigenvalues[warp.eigenvalues.size() - 1] << "\n";
}

WarpTransform compute_warp(const LoadedData& data, WarpKind kind, const SubbagConfig& bags,
                           int n_mc, const FitConfig& fit, std::uint64_t seed) {
  SubbagConfig use = bags;
  if (use.bag_size > data.X.rows()) {
    std::cerr << "warning: bag size " << use.bag_size << " exceeds data size " << data.X.rows()
              << "; shrinking\n";
    use.bag_size = data.X.rows();
  }
  WarpTransform warp;
  switch (kind) {
    case WarpKind::bandwidth:
      warp = build_L_ard(subbag_ard(data.X, data.y, use, fit));
      break;
    case WarpKind::range:
      warp = build_L_range(subbag_range(data.X, data.y, use, fit));
      break;
    case WarpKind::lebesgue: {
      MeasureSpec measure;
      measure.kind = MeasureKind::lebesgue;
      measure.n_mc = n_mc;
      measure.seed = mix_seed(seed, 0x3CA);
      warp = build_L_as(subbag_C(data.X, data.y, measure, use, fit));
      break;
    }
    case WarpKind::sample: {
      MeasureSpec measure;
      measure.kind = MeasureKind::sample;
      warp = build_L_as(subbag_C(data.X, data.y, measure, use, fit));
      break;
    }
    case WarpKind::none:
      warp = WarpTransform::identity(static_cast<int>(data.X.cols()));
      break;
  }
  warp.created_from.seed = seed;
  warp.created_from.n = data.X.rows();
  warp.created_from.n_bags = use.n_bags;
  warp.created_from.bag_size = use.bag_size;
  if (kind == WarpKind::lebesgue) warp.created_from.measure = "lebesgue";
  if (kind == WarpKind::sample) warp.created_from.measure = "sample";
  return warp;
}

int cmd_gen_data(const DataFlags& data_flags, const std::string& out) {
  if (data_flags.fn.empty()) throw ContractError("gen-data requires --fn");
  TestFunction fn = lookup_function(data_flags.fn, data_flags.fn_dim);
  Matrix X = lhs_sample(data_flags.n, fn.dim, mix_seed(data_flags.seed, 0xDA7A));
  Vector y = eval_function(fn, X);
  std::vector<std::string> names;
  for (int k = 0; k < fn.dim; ++k) names.push_back("x" + std::to_string(k + 1));
  write_csv(out, X, y, names, "y");
  json j;
  j["fn"] = fn.name;
  j["dim"] = fn.dim;
  j["n"] = data_flags.n;
  j["seed"] = data_flags.seed;
  j["out"] = out;
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sensitivity-prewarped local surrogate models"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (or PREWARP_THREADS)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "sample a test function to CSV");
  DataFlags gen_data;
  std::string gen_out;
  add_data_flags(gen, gen_data);
  gen->add_option("--out", gen_out, "output CSV path")->required();

  // warp
  auto* warp_cmd = app.add_subcommand("warp", "estimate a prewarping transform");
  DataFlags warp_data;
  add_data_flags(warp_cmd, warp_data);
  std::string warp_method, warp_out;
  SubbagConfig warp_bags;
  int warp_mc = 1000;
  FitConfig warp_fit;
  warp_cmd->add_option("--method", warp_method, "B | R | L | S")->required();
  warp_cmd->add_option("--out", warp_out, "output JSON path (default stdout)");
  warp_cmd->add_option("--bags", warp_bags.n_bags, "number of subsample bags")
      ->capture_default_str();
  warp_cmd->add_option("--bag-size", warp_bags.bag_size, "points per bag")->capture_default_str();
  warp_cmd->add_option("--mc", warp_mc, "Monte Carlo draws (method L)")->capture_default_str();
  warp_cmd->add_option("--n-starts", warp_fit.n_starts, "fit restarts")->capture_default_str();
  warp_cmd->add_option("--max-iters", warp_fit.max_iters, "fit iterations")
      ->capture_default_str();

  // truncate
  auto* trunc_cmd = app.add_subcommand("truncate", "select a truncation rank for a warp");
  DataFlags trunc_data;
  add_data_flags(trunc_cmd, trunc_data);
  std::string trunc_warp_path, trunc_out;
  int trunc_mind = 1, trunc_maxd = 0, trunc_knn = 10;
  bool trunc_update = false;
  trunc_cmd->add_option("--warp", trunc_warp_path, "warp JSON file")->required();
  trunc_cmd->add_option("--mind", trunc_mind, "smallest rank")->capture_default_str();
  trunc_cmd->add_option("--maxd", trunc_maxd, "largest rank (0 = input dimension)")
      ->capture_default_str();
  trunc_cmd->add_option("--knn-k", trunc_knn, "neighbors for the rank search")
      ->capture_default_str();
  trunc_cmd->add_flag("--update", trunc_update, "write the selected rank back into the file");
  trunc_cmd->add_option("--out", trunc_out, "output JSON path (default stdout)");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "fit one model and score a test split");
  DataFlags pred_data;
  add_data_flags(pred_cmd, pred_data);
  std::string pred_warp_path, pred_model = "KNN", pred_out;
  Index pred_n_test = 200;
  bool pred_truncate = false;
  LocalDefaults pred_local;
  SubbagConfig pred_bags;
  FitConfig pred_fit;
  pred_cmd->add_option("--warp", pred_warp_path, "warp JSON file (optional)");
  pred_cmd->add_flag("--truncate", pred_truncate, "use the warp's stored rank");
  pred_cmd->add_option("--model", pred_model, "KNN | laGP | vecc | sGP")->capture_default_str();
  pred_cmd->add_option("--n-test", pred_n_test, "test size")->capture_default_str();
  pred_cmd->add_option("--knn-k", pred_local.knn_k, "")->capture_default_str();
  pred_cmd->add_option("--lagp-kappa", pred_local.lagp_kappa, "")->capture_default_str();
  pred_cmd->add_option("--lagp-nmax", pred_local.lagp_n_max, "")->capture_default_str();
  pred_cmd->add_option("--lagp-pool", pred_local.lagp_pool, "")->capture_default_str();
  pred_cmd->add_option("--vecc-m", pred_local.vecc_m, "")->capture_default_str();
  pred_cmd->add_option("--bag-size", pred_bags.bag_size, "subset size (sGP)")
      ->capture_default_str();
  pred_cmd->add_option("--n-starts", pred_fit.n_starts, "fit restarts")->capture_default_str();
  pred_cmd->add_option("--max-iters", pred_fit.max_iters, "fit iterations")
      ->capture_default_str();
  pred_cmd->add_option("--out", pred_out, "output JSON path (default stdout)");

  // run
  auto* run_cmd = app.add_subcommand("run", "full experiment over methods and repetitions");
  DataFlags run_data;
  add_data_flags(run_cmd, run_data);
  ExperimentConfig run_config;
  std::string run_methods = "KNN,S-KNN";
  std::string run_out;
  bool fixed_design = false;
  run_cmd->add_option("--n-test", run_config.n_test, "test size")->capture_default_str();
  run_cmd->add_option("--methods", run_methods, "comma-separated method labels")
      ->capture_default_str();
  run_cmd->add_option("--bags", run_config.bags.n_bags, "")->capture_default_str();
  run_cmd->add_option("--bag-size", run_config.bags.bag_size, "")->capture_default_str();
  run_cmd->add_option("--mc", run_config.n_mc, "Monte Carlo draws (L warp)")
      ->capture_default_str();
  run_cmd->add_option("--reps", run_config.reps, "repetitions")->capture_default_str();
  run_cmd->add_option("--n-starts", run_config.fit.n_starts, "")->capture_default_str();
  run_cmd->add_option("--max-iters", run_config.fit.max_iters, "")->capture_default_str();
  run_cmd->add_option("--knn-k", run_config.local.knn_k, "")->capture_default_str();
  run_cmd->add_option("--lagp-kappa", run_config.local.lagp_kappa, "")->capture_default_str();
  run_cmd->add_option("--lagp-nmax", run_config.local.lagp_n_max, "")->capture_default_str();
  run_cmd->add_option("--lagp-pool", run_config.local.lagp_pool, "")->capture_default_str();
  run_cmd->add_option("--vecc-m", run_config.local.vecc_m, "")->capture_default_str();
  run_cmd->add_option("--mind", run_config.mind, "")->capture_default_str();
  run_cmd->add_option("--maxd", run_config.maxd, "")->capture_default_str();
  run_cmd->add_option("--trunc-k", run_config.trunc_k, "")->capture_default_str();
  run_cmd->add_flag("--fixed-design", fixed_design, "reuse one design across repetitions");
  run_cmd->add_flag("--timings", run_config.timings, "record wall-clock seconds in reports");
  run_cmd->add_option("--out", run_out, "JSONL output path (default stdout)");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "validate and re-emit an artifact");
  std::string inspect_path;
  inspect_cmd->add_option("file", inspect_path, "warp JSON or metrics JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    apply_threads(threads);

    if (*gen) return cmd_gen_data(gen_data, gen_out);

    if (*warp_cmd) {
      LoadedData data = load_data(warp_data);
      warp_fit.seed = mix_seed(warp_data.seed, 0xF17);
      warp_bags.seed = mix_seed(warp_data.seed, 0xBA65);
      WarpKind kind = warp_kind_from_letter(warp_method);
      WarpTransform warp = compute_warp(data, kind, warp_bags, warp_mc, warp_fit, warp_data.seed);
      print_spectrum(warp);
      write_or_print(warp_out, warp_to_json(warp));
      return 0;
    }

    if (*trunc_cmd) {
      LoadedData data = load_data(trunc_data);
      WarpTransform warp = warp_from_json(read_file(trunc_warp_path));
      if (warp.dim() != data.X.cols())
        throw DataError("warp dimension does not match the data");
      const int p = warp.dim();
      const int maxd = trunc_maxd > 0 ? std::min(trunc_maxd, p) : p;
      Matrix Z = apply_warp(data.X, warp, p);
      json j;
      std::vector<double> mses, bics;
      for (int r = trunc_mind; r <= maxd; ++r) {
        const double m = loo_knn_mse(Z, data.y, r, trunc_knn);
        mses.push_back(m);
        bics.push_back(knn_bic(m, Z.rows(), r));
      }
      const int r_sel = select_truncation(Z, data.y, trunc_mind, maxd, trunc_knn);
      j["r"] = r_sel;
      j["mind"] = trunc_mind;
      j["maxd"] = maxd;
      j["mse"] = mses;
      j["bic"] = bics;
      write_or_print(trunc_out, j.dump() + "\n");
      if (trunc_update) {
        warp.r = r_sel;
        write_or_print(trunc_warp_path, warp_to_json(warp));
        std::cerr << "updated " << trunc_warp_path << " with r = " << r_sel << "\n";
      }
      return 0;
    }

    if (*pred_cmd) {
      ExperimentConfig config;
      config.function = pred_data.fn;
      config.fn_dim = pred_data.fn_dim;
      config.csv_path = pred_data.csv;
      config.response_column = pred_data.response;
      config.n_train = pred_data.n;
      config.n_test = pred_n_test;
      config.reps = 1;
      config.seed = pred_data.seed;
      config.local = pred_local;
      config.bags = pred_bags;
      config.fit = pred_fit;

      MethodSpec method = parse_method_label(pred_model);
      if (!pred_warp_path.empty()) {
        // stand-alone path: apply a stored warp rather than re-estimating one
        WarpTransform warp = warp_from_json(read_file(pred_warp_path));
        LoadedData data = load_data(pred_data);
        if (warp.dim() != data.X.cols())
          throw DataError("warp dimension does not match the data");
        const int r = pred_truncate ? warp.r : warp.dim();
        Rng rng(mix_seed(pred_data.seed, 0x5B1));
        std::vector<Index> perm(static_cast<std::size_t>(data.X.rows()));
        for (Index i = 0; i < data.X.rows(); ++i) perm[static_cast<std::size_t>(i)] = i;
        shuffle(perm, rng);
        if (config.n_train + config.n_test > data.X.rows())
          throw DataError("not enough rows for the requested split");
        Matrix Xtr(config.n_train, data.X.cols()), Xte(config.n_test, data.X.cols());
        Vector ytr(config.n_train), yte(config.n_test);
        for (Index i = 0; i < config.n_train; ++i) {
          Xtr.row(i) = data.X.row(perm[static_cast<std::size_t>(i)]);
          ytr[i] = data.y[perm[static_cast<std::size_t>(i)]];
        }
        for (Index i = 0; i < config.n_test; ++i) {
          Xte.row(i) = data.X.row(perm[static_cast<std::size_t>(config.n_train + i)]);
          yte[i] = data.y[perm[static_cast<std::size_t>(config.n_train + i)]];
        }
        Matrix Ztr = apply_warp(Xtr, warp, r);
        Matrix Zte = apply_warp(Xte, warp, r);

        json j;
        j["model"] = model_kind_name(method.model);
        j["warp_file"] = pred_warp_path;
        j["r_used"] = r;
        j["n_train"] = config.n_train;
        j["n_test"] = config.n_test;
        j["seed"] = pred_data.seed;
        if (method.model == ModelKind::knn) {
          Vector pred = knn_predict_batch(Ztr, ytr, Zte, config.local.knn_k);
          j["mse"] = mse(pred, yte);
          j["neg_score"] = nullptr;
        } else if (method.model == ModelKind::local_gp) {
          LocalConfig lc;
          lc.k = config.local.lagp_kappa;
          lc.n_max = config.local.lagp_n_max;
          lc.candidate_pool = config.local.lagp_pool;
          const double yv = (ytr.array() - ytr.mean()).square().mean();
          KernelSpec spec0 = KernelSpec::isotropic(static_cast<int>(Ztr.cols()),
                                                   mean_sq_spacing(Ztr) / 10.0,
                                                   std::max(yv, 1e-12), 1e-6 * std::max(yv, 1e-12));
          PredictiveDist pred = local_gp_predict_batch(Ztr, ytr, Zte, lc, spec0);
          j["mse"] = mse(pred.mean, yte);
          j["neg_score"] = neg_log_score(pred, yte);
        } else {
          throw ContractError("predict --warp supports KNN and laGP; use run for the rest");
        }
        write_or_print(pred_out, j.dump() + "\n");
        return 0;
      }

      config.methods = {method};
      ExperimentResult result = run_experiment(config);
      const MetricsReport& rep = result.reports.front();
      json j;
      j["model"] = model_kind_name(method.model);
      j["label"] = rep.label;
      j["r_used"] = rep.r_used;
      j["mse"] = rep.failed ? json(nullptr) : json(rep.mse);
      j["neg_score"] = rep.neg_score ? json(*rep.neg_score) : json(nullptr);
      j["n_train"] = rep.n_train;
      j["n_test"] = rep.n_test;
      j["seed"] = rep.seed;
      j["config"] = json::parse(config_to_json(config));
      if (rep.failed) j["error"] = rep.error;
      write_or_print(pred_out, j.dump() + "\n");
      return rep.failed ? kExitNumerical : 0;
    }

    if (*run_cmd) {
      run_config.function = run_data.fn;
      run_config.fn_dim = run_data.fn_dim;
      run_config.csv_path = run_data.csv;
      run_config.response_column = run_data.response;
      run_config.n_train = run_data.n;
      run_config.seed = run_data.seed;
      run_config.resample_design = !fixed_design;
      run_config.methods = parse_method_list(run_methods);

      ExperimentResult result = run_experiment(run_config);
      std::vector<LabelSummary> summary = summarize(result.reports);

      std::ostringstream lines;
      for (const MetricsReport& rep : result.reports) lines << report_to_json_line(rep) << "\n";
      const std::string summary_text = summary_to_json(run_config, summary) + "\n";

      if (run_out.empty() || run_out == "-") {
        std::cout << lines.str() << summary_text;
      } else {
        write_or_print(run_out, lines.str());
        write_or_print(run_out + ".summary.json", summary_text);
        for (const RepWarp& rw : result.warps) {
          const std::string path = run_out + ".warp.rep" + std::to_string(rw.rep) + "." +
                                   warp_kind_prefix(rw.kind) + ".json";
          write_or_print(path, warp_to_json(rw.warp));
        }
      }

      std::cerr << "label            median MSE     median -score  ok/failed\n";
      for (const LabelSummary& s : summary) {
        std::ostringstream row;
        row.width(16);
        row << std::left << s.label;
        row << " " << std::scientific << s.median_mse << "   ";
        if (s.median_neg_score)
          row << std::scientific << *s.median_neg_score;
        else
          row << "      --     ";
        row << "  " << s.n_ok << "/" << s.n_failed;
        std::cerr << row.str() << "\n";
      }
      return 0;
    }

    if (*inspect_cmd) {
      const std::string text = read_file(inspect_path);
      // a warp document is a single JSON object with an "L" field
      bool handled = false;
      try {
        json j = json::parse(text);
        if (j.is_object() && j.contains("L")) {
          WarpTransform warp = warp_from_json(text);
          print_spectrum(warp);
          std::cerr << "p = " << warp.dim() << ", r = " << warp.r << ", seed = "
                    << warp.created_from.seed << "\n";
          std::cout << warp_to_json(warp);
          handled = true;
        }
      } catch (const json::parse_error&) {
        handled = false;
      }
      if (!handled) {
        // metrics JSONL: summarize per label
        std::istringstream in(text);
        std::string line;
        std::vector<MetricsReport> reports;
        Index line_no = 0;
        while (std::getline(in, line)) {
          ++line_no;
          if (line.empty()) continue;
          json j;
          try {
            j = json::parse(line);
          } catch (const json::parse_error& e) {
            throw DataError(inspect_path + ":" + std::to_string(line_no) + ": " + e.what());
          }
          if (!j.contains("label")) continue;  // summary line in stdout-mode output
          MetricsReport rep;
          rep.label = j.at("label").get<std::string>();
          rep.rep = j.value("rep", 0);
          rep.failed = j.value("failed", false);
          if (!rep.failed && j.contains("mse") && !j.at("mse").is_null())
            rep.mse = j.at("mse").get<double>();
          else if (!rep.failed)
            rep.failed = true;
          if (j.contains("neg_score") && !j.at("neg_score").is_null())
            rep.neg_score = j.at("neg_score").get<double>();
          reports.push_back(std::move(rep));
        }
        if (reports.empty()) throw DataError("no metric records found in " + inspect_path);
        std::vector<LabelSummary> summary = summarize(reports);
        json out = json::object();
        for (const LabelSummary& s : summary) {
          out[s.label] = {{"median_mse", s.median_mse},
                          {"median_neg_score",
                           s.median_neg_score ? json(*s.median_neg_score) : json(nullptr)},
                          {"ok", s.n_ok},
                          {"failed", s.n_failed}};
          std::cerr << s.label << ": median mse " << s.median_mse << ", ok " << s.n_ok
                    << ", failed " << s.n_failed << "\n";
        }
        std::cout << out.dump() << "\n";
      }
      return 0;
    }
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
