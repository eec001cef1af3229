#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "spregime/common.hpp"
#include "spregime/endogeneity.hpp"
#include "spregime/geodata.hpp"
#include "spregime/inference.hpp"
#include "spregime/local_regression.hpp"
#include "spregime/regimes.hpp"
#include "spregime/spatial_fit.hpp"
#include "spregime/stats.hpp"
#include "spregime/synthetic.hpp"
#include "spregime/weights.hpp"

namespace spregime {

struct ModelRequest {
  ModelKind kind = ModelKind::Ols;
  bool regimes = false;
};

inline ModelRequest parse_model_request(const std::string& s) {
  ModelRequest r;
  std::string base = s;
  const std::string suffix = "_regimes";
  if (base.size() > suffix.size() &&
      base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    r.regimes = true;
    base = base.substr(0, base.size() - suffix.size());
  }
  if (base == "ols") r.kind = ModelKind::Ols;
  else if (base == "sae") r.kind = ModelKind::Sae;
  else if (base == "sar") r.kind = ModelKind::Sar;
  else if (base == "sarar") r.kind = ModelKind::Sarar;
  else throw ConfigError("unknown model request '" + s + "'");
  return r;
}

inline std::string model_request_name(const ModelRequest& r) {
  std::string s = model_kind_name(r.kind);
  for (auto& ch : s) ch = static_cast<char>(std::tolower(ch));
  return r.regimes ? s + "_regimes" : s;
}

enum class StopAfter { Full, Bandwidth, Regimes };

struct RunConfig {
  std::string dataset;
  ModelSpec model;
  AwsConfig aws;
  int w_knn = 10;
  int bw_min = 0;     // 0 = 2(k+1)
  int bw_max = 0;     // 0 = n-1
  int bw_fixed = 0;   // >0 skips the search
  std::vector<ModelRequest> models;
  std::string output_dir = ".";
  bool paper_df = false;
  bool no_timestamp = false;
  bool drop_nonpositive = false;
  bool project_lonlat = false;
  bool export_w = false;
  int threads = 1;            // never echoed into the report
  std::string truth_path;     // optional true labels, one per row
  std::string labels_path;    // user-supplied regimes: skip the smoothing stage
  StopAfter stop_after = StopAfter::Full;

  void check() const {
    model.check();
    aws.check();
    if (dataset.empty()) throw ConfigError("run config: dataset path required");
    if (models.empty() && stop_after == StopAfter::Full)
      throw ConfigError("run config: at least one model must be requested");
    if (w_knn < 1) throw ConfigError("run config: w_knn must be positive");
    if (threads < 1) throw ConfigError("run config: threads must be positive");
  }
};

inline void from_json(const nlohmann::json& j, AwsConfig& a) {
  a.tau = j.value("tau", 0.001);
  a.eta = j.value("eta", 0.5);
  a.omega = j.value("omega", 1e-6);
  a.max_iter = j.value("max_iter", 100);
  a.theta = j.value("theta", 0.5);
  a.min_regime_size = j.value("min_regime_size", 0);
  const std::string cov = j.value("cov_mode", "sum");
  if (cov == "sum") a.cov_mode = WaldCov::Sum;
  else if (cov == "first") a.cov_mode = WaldCov::First;
  else if (cov == "pooled") a.cov_mode = WaldCov::Pooled;
  else throw ConfigError("aws config: unknown cov_mode '" + cov + "'");
  a.df_normalize = j.value("df_normalize", false);
  a.check();
}

inline void to_json(nlohmann::json& j, const AwsConfig& a) {
  const char* cov = a.cov_mode == WaldCov::Sum     ? "sum"
                    : a.cov_mode == WaldCov::First ? "first"
                                                   : "pooled";
  j = {{"tau", a.tau},
       {"eta", a.eta},
       {"omega", a.omega},
       {"max_iter", a.max_iter},
       {"theta", a.theta},
       {"min_regime_size", a.min_regime_size},
       {"cov_mode", cov},
       {"df_normalize", a.df_normalize}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.dataset = j.at("dataset").get<std::string>();
  c.model = j.at("model").get<ModelSpec>();
  if (j.contains("aws")) c.aws = j.at("aws").get<AwsConfig>();
  c.w_knn = j.value("w_knn", 10);
  if (j.contains("bandwidth")) {
    const auto& b = j.at("bandwidth");
    c.bw_min = b.value("min", 0);
    c.bw_max = b.value("max", 0);
    c.bw_fixed = b.value("fixed", 0);
  }
  if (j.contains("models"))
    for (const auto& m : j.at("models"))
      c.models.push_back(parse_model_request(m.get<std::string>()));
  c.output_dir = j.value("output_dir", std::string("."));
  c.paper_df = j.value("paper_df", false);
  c.drop_nonpositive = j.value("drop_nonpositive", false);
  c.project_lonlat = j.value("project_lonlat", false);
  c.export_w = j.value("export_w", false);
  c.truth_path = j.value("truth", std::string());
  c.labels_path = j.value("labels", std::string());
}

// Echo of the effective configuration; excludes anything that must not
// influence the report bytes (thread count, output location).
inline nlohmann::json config_echo(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset;
  j["model"] = c.model;
  j["aws"] = c.aws;
  j["w_knn"] = c.w_knn;
  j["bandwidth"] = {{"min", c.bw_min}, {"max", c.bw_max}, {"fixed", c.bw_fixed}};
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.models) models.push_back(model_request_name(m));
  j["models"] = models;
  j["paper_df"] = c.paper_df;
  j["drop_nonpositive"] = c.drop_nonpositive;
  j["project_lonlat"] = c.project_lonlat;
  if (!c.truth_path.empty()) j["truth"] = c.truth_path;
  if (!c.labels_path.empty()) j["labels"] = c.labels_path;
  return j;
}

struct PipelineResult {
  GeoDataset ds;
  ValidationReport validation;
  DesignMatrices dm;
  Eigen::MatrixXd xhat;
  std::vector<FirstStageStat> first_stage;
  BandwidthSelection bandwidth;
  WeightState aws;
  RegimeAssignment regimes;
  std::vector<std::pair<ModelRequest, FitResult>> fits;
  std::vector<TestResult> tests;
  std::vector<ComparisonRow> comparison;
  std::string best_model;
  bool regimes_descriptive_only = false;
  double ari = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json report;
};

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("stage ") + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("stage ") + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string("stage ") + name + ": " + e.what());
  }
}

inline std::vector<int> load_labels(const std::string& path, Eigen::Index n) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path);
  std::vector<int> labels;
  int v;
  while (in >> v) labels.push_back(v);
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError("labels file " + path + " has " + std::to_string(labels.size()) +
                    " entries, dataset has " + std::to_string(n));
  return labels;
}

inline RegimeAssignment assignment_from_labels(std::vector<int> labels) {
  RegimeAssignment a;
  a.labels = std::move(labels);
  int c = 0;
  for (int v : a.labels) {
    if (v < 1) throw ConfigError("labels must be positive integers starting at 1");
    c = std::max(c, v);
  }
  a.c = c;
  a.sizes.assign(static_cast<std::size_t>(c), 0);
  for (int v : a.labels) ++a.sizes[static_cast<std::size_t>(v - 1)];
  for (int r = 0; r < c; ++r)
    if (a.sizes[static_cast<std::size_t>(r)] == 0)
      throw ConfigError("labels must use consecutive ids 1..c (id " +
                        std::to_string(r + 1) + " unused)");
  return a;
}

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline nlohmann::json json_num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::json fit_to_json(const ModelRequest& req, const FitResult& f) {
  nlohmann::json j;
  j["model"] = model_kind_name(f.kind);
  j["regimes"] = req.regimes;
  j["n_regimes"] = f.n_regimes;
  nlohmann::json coefs = nlohmann::json::array();
  for (Eigen::Index c = 0; c < f.beta.size(); ++c) {
    nlohmann::json one;
    one["term"] = f.term_names[static_cast<std::size_t>(c)];
    one["regime"] = f.term_regime[static_cast<std::size_t>(c)];
    one["estimate"] = json_num(f.beta[c]);
    if (f.se.size() == f.beta.size()) {
      one["se"] = json_num(f.se[c]);
      one["p"] = json_num(f.p_values[c]);
      one["stars"] = significance_stars(f.p_values[c]);
    }
    coefs.push_back(one);
  }
  j["coefficients"] = coefs;
  if (f.has_rho)
    j["rho"] = {{"estimate", json_num(f.rho)},
                {"se", json_num(f.se_rho)},
                {"p", json_num(f.p_rho)},
                {"stars", std::isfinite(f.p_rho) ? significance_stars(f.p_rho) : ""}};
  if (f.has_lambda)
    j["lambda"] = {{"estimate", json_num(f.lambda)},
                   {"se", json_num(f.se_lambda)},
                   {"p", json_num(f.p_lambda)},
                   {"stars", std::isfinite(f.p_lambda) ? significance_stars(f.p_lambda) : ""}};
  j["sigma2"] = json_num(f.sigma2);
  j["logl"] = json_num(f.logl);
  j["aic"] = json_num(f.aic);
  j["n_par"] = f.n_par;
  j["n"] = f.n;
  j["boundary_hit"] = f.boundary_hit;
  j["identification_caveat"] = f.identification_caveat;
  j["se_failed"] = f.se_failed;
  return j;
}

inline nlohmann::json test_to_json(const TestResult& t) {
  nlohmann::json j;
  j["test"] = t.name;
  j["statistic"] = json_num(t.statistic);
  j["distribution"] = t.distribution;
  j["df1"] = t.df1;
  if (t.df2 > 0) j["df2"] = t.df2;
  j["p"] = json_num(t.p);
  j["compared"] = t.compared;
  return j;
}

// All artifacts are buffered and committed at the end; a failed write
// removes everything written so far, so no partial output survives.
class OutputBundle {
 public:
  void add(std::string relpath, std::string content) {
    files_.emplace_back(std::move(relpath), std::move(content));
  }

  void commit(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory: " + dir);
    std::vector<fs::path> written;
    for (const auto& [rel, content] : files_) {
      const fs::path path = fs::path(dir) / rel;
      std::ofstream out(path, std::ios::binary);
      if (out) {
        out << content;
        out.flush();
      }
      if (!out) {
        for (const auto& w : written) fs::remove(w, ec);
        fs::remove(path, ec);
        throw DataError("write failed: " + path.string());
      }
      written.push_back(path);
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace detail

inline const char* kStarLegend = kSignificanceLegend;

inline std::string coefficients_csv(
    const std::vector<std::pair<ModelRequest, FitResult>>& fits) {
  std::string out = "model,cluster,term,estimate,std_error,p_value,significance\n";
  for (const auto& [req, f] : fits) {
    const std::string model = model_request_name(req);
    auto row = [&](const std::string& cluster, const std::string& term, double est,
                   double se, double p) {
      out += model + ',' + cluster + ',' + term + ',' + detail::csv_num(est) + ',' +
             detail::csv_num(se) + ',' + detail::csv_num(p) + ',' +
             (std::isfinite(p) ? significance_stars(p) : "") + '\n';
    };
    for (Eigen::Index c = 0; c < f.beta.size(); ++c) {
      const int reg = f.term_regime[static_cast<std::size_t>(c)];
      const std::string cluster = reg == 0 ? "global" : "cluster_" + std::to_string(reg);
      const bool has_se = f.se.size() == f.beta.size();
      row(cluster, f.term_names[static_cast<std::size_t>(c)], f.beta[c],
          has_se ? f.se[c] : std::numeric_limits<double>::quiet_NaN(),
          has_se ? f.p_values[c] : std::numeric_limits<double>::quiet_NaN());
    }
    if (f.has_rho) row("global", "rho", f.rho, f.se_rho, f.p_rho);
    if (f.has_lambda) row("global", "lambda", f.lambda, f.se_lambda, f.p_lambda);
    row("global", "sigma2", f.sigma2, std::numeric_limits<double>::quiet_NaN(),
        std::numeric_limits<double>::quiet_NaN());
  }
  out += std::string("# ") + kStarLegend + "\n";
  return out;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "model,regimes,log_likelihood,n_parameters,aic,best\n";
  for (const auto& r : rows)
    out += r.model + ',' + (r.regimes ? "yes" : "no") + ',' + detail::csv_num(r.logl) +
           ',' + std::to_string(r.n_par) + ',' + detail::csv_num(r.aic) + ',' +
           (r.best ? "yes" : "no") + '\n';
  return out;
}

inline std::string tests_csv(const std::vector<TestResult>& tests) {
  std::string out = "test,statistic,distribution,df1,df2,p_value,compared\n";
  for (const auto& t : tests)
    out += t.name + ',' + detail::csv_num(t.statistic) + ',' + t.distribution + ',' +
           detail::csv_num(t.df1) + ',' + (t.df2 > 0 ? detail::csv_num(t.df2) : "") +
           ',' + detail::csv_num(t.p) + ',' + '"' + t.compared + '"' + '\n';
  return out;
}

inline std::string local_fits_csv(const GeoDataset& ds, const WeightState& st,
                                  const std::vector<std::string>& x_names) {
  std::string out = "id,x,y";
  for (const auto& nm : x_names) out += ",beta_" + nm;
  for (const auto& nm : x_names) out += ",se_" + nm;
  out += ",sigma2\n";
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const LocalFit& f = st.fits[static_cast<std::size_t>(i)];
    out += ds.ids[static_cast<std::size_t>(i)] + ',' +
           detail::csv_num(ds.coords(i, 0)) + ',' + detail::csv_num(ds.coords(i, 1));
    for (Eigen::Index c = 0; c < f.beta.size(); ++c)
      out += ',' + detail::csv_num(f.beta[c]);
    for (Eigen::Index c = 0; c < f.beta.size(); ++c)
      out += ',' + detail::csv_num(std::sqrt(std::max(0.0, f.cov(c, c))));
    out += ',' + detail::csv_num(f.sigma2) + '\n';
  }
  return out;
}

inline std::string aws_trace_jsonl(const WeightState& st) {
  std::string out;
  for (const auto& rec : st.trace) {
    nlohmann::json j;
    j["iteration"] = rec.iteration;
    j["max_change"] = detail::json_num(rec.max_change);
    j["mean_factor"] = detail::json_num(rec.mean_factor);
    j["active_pairs"] = rec.active_pairs;
    j["floored_rows"] = rec.floored_rows;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string regimes_geojson(const GeoDataset& ds, const RegimeAssignment& reg,
                                   const WeightState* st,
                                   const std::vector<std::string>& x_names) {
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                  "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  nlohmann::json fc;
  fc["type"] = "FeatureCollection";
  nlohmann::json feats = nlohmann::json::array();
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    nlohmann::json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"},
                     {"coordinates", {ds.coords(i, 0), ds.coords(i, 1)}}};
    nlohmann::json props;
    props["id"] = ds.ids[static_cast<std::size_t>(i)];
    const int r = reg.labels[static_cast<std::size_t>(i)];
    props["regime"] = r;
    props["color"] = palette[(r - 1) % 8];
    if (st && !st->fits.empty()) {
      const LocalFit& lf = st->fits[static_cast<std::size_t>(i)];
      nlohmann::json bl;
      for (Eigen::Index c = 0; c < lf.beta.size(); ++c)
        bl[ "beta_" + x_names[static_cast<std::size_t>(c)]] = detail::json_num(lf.beta[c]);
      props["beta_local"] = bl;
    }
    f["properties"] = props;
    feats.push_back(f);
  }
  fc["features"] = feats;
  return fc.dump(2) + "\n";
}

inline PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.check();
  PipelineResult res;

  res.ds = detail::stage("ingest", [&] {
    LoadOptions lo;
    lo.drop_nonpositive = cfg.drop_nonpositive;
    GeoDataset ds = load_csv(cfg.dataset, cfg.model, lo);
    if (cfg.project_lonlat) ds.coords = project_lonlat_km(ds.coords);
    return ds;
  });
  const Eigen::Index n = res.ds.n();

  res.validation = detail::stage("validate", [&] { return validate(res.ds); });

  res.dm = detail::stage("log_transform", [&] { return log_transform(res.ds, cfg.model); });

  detail::stage("endogeneity", [&] {
    if (!res.dm.endogenous_cols.empty()) {
      Eigen::MatrixXd x2(n, static_cast<Eigen::Index>(res.dm.endogenous_cols.size()));
      std::vector<std::string> names;
      for (std::size_t q = 0; q < res.dm.endogenous_cols.size(); ++q) {
        x2.col(static_cast<Eigen::Index>(q)) = res.dm.X.col(res.dm.endogenous_cols[q]);
        names.push_back(res.dm.x_names[static_cast<std::size_t>(res.dm.endogenous_cols[q])]);
      }
      res.first_stage = first_stage_diagnostics(x2, res.dm.Z,
                                                res.dm.n_external_instruments, names);
    }
    res.xhat = project_endogenous(res.dm.X, res.dm.Z, res.dm.endogenous_cols);
    return 0;
  });

  const Eigen::MatrixXd dist = pairwise_distance(res.ds.coords);
  const Eigen::Index p = res.dm.X.cols();

  const bool have_labels = !cfg.labels_path.empty();
  if (!have_labels) {
    detail::stage("select_bandwidth", [&] {
      if (cfg.bw_fixed > 0) {
        res.bandwidth.k = cfg.bw_fixed;
        res.bandwidth.best = gwr_aicc(res.xhat, res.dm.y, dist, cfg.bw_fixed, {},
                                      cfg.threads);
        res.bandwidth.evaluated.emplace(cfg.bw_fixed, res.bandwidth.best);
        if (!res.bandwidth.best.valid)
          throw ConfigError("fixed neighbour count is infeasible for this dataset");
      } else {
        const int k_min = cfg.bw_min > 0 ? cfg.bw_min : static_cast<int>(2 * p);
        const int k_max = cfg.bw_max > 0 ? cfg.bw_max : static_cast<int>(n - 1);
        res.bandwidth = select_bandwidth(res.xhat, res.dm.y, dist, k_min, k_max, {},
                                         cfg.threads);
      }
      return 0;
    });
    if (cfg.stop_after == StopAfter::Bandwidth) return res;

    detail::stage("aws", [&] {
      res.aws = run_aws(res.xhat, res.dm.y, res.ds.coords, res.bandwidth.k, cfg.aws, {},
                        cfg.threads);
      return 0;
    });
    res.regimes = detail::stage("extract_regimes",
                                [&] { return extract_regimes(res.aws, cfg.aws); });
  } else {
    res.regimes = detail::stage("labels", [&] {
      return detail::assignment_from_labels(detail::load_labels(cfg.labels_path, n));
    });
  }

  if (!cfg.truth_path.empty()) {
    const std::vector<int> truth = detail::load_labels(cfg.truth_path, n);
    res.ari = adjusted_rand_index(truth, res.regimes.labels);
  }

  if (cfg.stop_after == StopAfter::Regimes) return res;

  detail::stage("fits", [&] {
    const Eigen::SparseMatrix<double> W = knn_row_normalized_w(dist, cfg.w_knn);
    const LogDetFactor ldf(W);
    std::optional<Eigen::MatrixXd> xt;  // regime design, built on demand
    DesignInfo regime_info;
    auto regime_design = [&]() -> const Eigen::MatrixXd& {
      if (!xt) {
        xt = build_regime_design(res.xhat, res.regimes);
        regime_info = regime_design_info(res.dm.x_names, res.regimes);
      }
      return *xt;
    };
    FitOptions fo;
    fo.n_threads = cfg.threads;
    const DesignInfo global_info = global_design_info(res.dm.x_names);
    for (const ModelRequest& req : cfg.models) {
      const Eigen::MatrixXd& X = req.regimes ? regime_design() : res.xhat;
      const DesignInfo& info = req.regimes ? regime_info : global_info;
      FitResult f;
      switch (req.kind) {
        case ModelKind::Ols: f = ols_fit(X, res.dm.y, info); break;
        case ModelKind::Sae: f = sae_fit(X, res.dm.y, W, fo, info, &ldf); break;
        case ModelKind::Sar: f = sar_fit(X, res.dm.y, W, fo, info, &ldf); break;
        case ModelKind::Sarar:
          f = sarar_fit(X, res.dm.y, W, W, fo, info, &ldf, &ldf);
          break;
      }
      res.fits.emplace_back(req, std::move(f));
    }
    return 0;
  });

  detail::stage("tests", [&] {
    InferenceOptions io;
    io.paper_df = cfg.paper_df;
    auto find_fit = [&](ModelKind kind, bool regimes) -> const FitResult* {
      for (const auto& [req, f] : res.fits)
        if (req.kind == kind && req.regimes == regimes) return &f;
      return nullptr;
    };
    const bool any_regime_request =
        std::any_of(res.fits.begin(), res.fits.end(),
                    [](const auto& pr) { return pr.first.regimes; });
    if (res.regimes.c >= 2 && any_regime_request)
      res.tests.push_back(chow_test(res.xhat, res.dm.y, res.regimes, io));
    const FitResult* sae_g = find_fit(ModelKind::Sae, false);
    const FitResult* sae_r = find_fit(ModelKind::Sae, true);
    if (res.regimes.c >= 2 && sae_g && sae_r && sae_r->beta_cov.size() > 0) {
      SpatialChow sc = spatial_chow_test(*sae_g, *sae_r, io);
      res.tests.push_back(sc.wald);
      if (sc.has_lr) res.tests.push_back(sc.lr);
    }
    for (bool regimes : {false, true}) {
      const FitResult* full = find_fit(ModelKind::Sarar, regimes);
      const FitResult* nested = find_fit(ModelKind::Sae, regimes);
      if (full && nested) {
        TestResult t = lr_test(*full, *nested);
        t.name = regimes ? "lr_sarar_vs_sae_regimes" : "lr_sarar_vs_sae";
        res.tests.push_back(t);
      }
    }
    return 0;
  });

  if (res.fits.size() >= 2) {
    std::vector<FitResult> fr;
    for (const auto& [req, f] : res.fits) fr.push_back(f);
    res.comparison = model_comparison(fr);
    res.best_model = res.comparison.front().model +
                     (res.comparison.front().regimes ? "_regimes" : "");
    for (auto& c : res.best_model) c = static_cast<char>(std::tolower(c));
    res.regimes_descriptive_only =
        res.regimes.c >= 2 && !res.comparison.front().regimes;
  } else if (res.fits.size() == 1) {
    res.best_model = model_request_name(res.fits.front().first);
  }

  return res;
}

inline nlohmann::json build_report(const RunConfig& cfg, const PipelineResult& res) {
  nlohmann::json j;
  j["config"] = config_echo(cfg);
  j["n"] = res.ds.n();
  if (!res.ds.dropped_rows.empty()) j["dropped_rows"] = res.ds.dropped_rows;

  nlohmann::json val;
  val["n"] = res.validation.n;
  nlohmann::json dups = nlohmann::json::array();
  for (const auto& [a, b] : res.validation.duplicate_coord_pairs)
    dups.push_back({a, b});
  val["duplicate_coordinate_pairs"] = dups;
  val["rank_warnings"] = res.validation.rank_warnings;
  nlohmann::json sums = nlohmann::json::array();
  for (const auto& [name, st] : res.validation.summaries)
    sums.push_back({{"variable", name},
                    {"min", detail::json_num(st.min)},
                    {"median", detail::json_num(st.median)},
                    {"mean", detail::json_num(st.mean)},
                    {"max", detail::json_num(st.max)},
                    {"sd", detail::json_num(st.sd)}});
  val["summaries"] = sums;
  j["validation"] = val;

  if (!res.first_stage.empty()) {
    nlohmann::json fs = nlohmann::json::array();
    for (const auto& s : res.first_stage)
      fs.push_back({{"variable", s.name},
                    {"r2", detail::json_num(s.r2)},
                    {"f", detail::json_num(s.f)},
                    {"p", detail::json_num(s.p)},
                    {"weak", s.weak}});
    j["first_stage"] = fs;
  }

  if (res.bandwidth.k > 0) {
    nlohmann::json bw;
    bw["k"] = res.bandwidth.k;
    bw["aicc"] = detail::json_num(res.bandwidth.best.aicc);
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& [k, s] : res.bandwidth.evaluated)
      ev.push_back({{"k", k}, {"aicc", detail::json_num(s.aicc)}, {"valid", s.valid}});
    bw["evaluated"] = ev;
    j["bandwidth"] = bw;
  }

  if (!res.aws.fits.empty()) {
    j["aws"] = {{"iterations", res.aws.iterations},
                {"converged", res.aws.converged},
                {"floored_rows", res.aws.floored_rows_total},
                {"pseudo_inverse_fallback", res.aws.pinv_warning},
                {"pairs", res.aws.pairs.size()}};
  }

  if (res.regimes.c > 0) {
    j["regimes"] = {{"c", res.regimes.c},
                    {"sizes", res.regimes.sizes},
                    {"labels", res.regimes.labels}};
  }
  if (std::isfinite(res.ari)) j["ari_vs_truth"] = res.ari;

  if (!res.fits.empty()) {
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& [req, f] : res.fits) fits.push_back(detail::fit_to_json(req, f));
    j["fits"] = fits;
  }
  if (!res.tests.empty()) {
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& t : res.tests) tests.push_back(detail::test_to_json(t));
    j["tests"] = tests;
  }
  if (!res.comparison.empty()) {
    nlohmann::json cmp = nlohmann::json::array();
    for (const auto& r : res.comparison)
      cmp.push_back({{"model", r.model},
                     {"regimes", r.regimes},
                     {"logl", detail::json_num(r.logl)},
                     {"n_par", r.n_par},
                     {"aic", detail::json_num(r.aic)},
                     {"best", r.best}});
    j["comparison"] = cmp;
  }
  if (!res.best_model.empty()) j["best_model"] = res.best_model;
  j["regimes_descriptive_only"] = res.regimes_descriptive_only;
  j["significance_legend"] = kStarLegend;
  if (!cfg.no_timestamp) {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = buf;
  }
  return j;
}

// Runs the pipeline and writes every artifact into cfg.output_dir.
inline PipelineResult run_and_write(const RunConfig& cfg) {
  PipelineResult res = run_pipeline(cfg);
  res.report = build_report(cfg, res);

  detail::OutputBundle out;
  out.add("report.json", res.report.dump(2) + "\n");
  if (cfg.stop_after == StopAfter::Full && !res.fits.empty()) {
    out.add("coefficients.csv", coefficients_csv(res.fits));
    if (!res.comparison.empty()) out.add("comparison.csv", comparison_csv(res.comparison));
    out.add("tests.csv", tests_csv(res.tests));
  }
  if (res.regimes.c > 0)
    out.add("regimes.geojson",
            regimes_geojson(res.ds, res.regimes, res.aws.fits.empty() ? nullptr : &res.aws,
                            res.dm.x_names));
  if (!res.aws.fits.empty() && cfg.stop_after != StopAfter::Bandwidth) {
    out.add("aws_trace.jsonl", aws_trace_jsonl(res.aws));
    out.add("local_fits.csv", local_fits_csv(res.ds, res.aws, res.dm.x_names));
  }
  if (cfg.export_w) {
    const Eigen::MatrixXd dist = pairwise_distance(res.ds.coords);
    const Eigen::SparseMatrix<double> W = knn_row_normalized_w(dist, cfg.w_knn);
    out.add("w_triplets.txt", w_triplets_string(W));
  }
  out.commit(cfg.output_dir);
  return res;
}

struct SimulateMetrics {
  int rep = 0;
  std::uint64_t seed = 0;
  double ari = std::numeric_limits<double>::quiet_NaN();
  int c_extracted = 0;
  double coef_rmse = std::numeric_limits<double>::quiet_NaN();
  double lambda_hat = std::numeric_limits<double>::quiet_NaN();
  double rho_hat = std::numeric_limits<double>::quiet_NaN();
  double chow_p = std::numeric_limits<double>::quiet_NaN();
  double spatial_chow_p = std::numeric_limits<double>::quiet_NaN();
};

// Generation + full pipeline per replication. Test size is measured on a
// response-independent partition: the true landscape when the scenario has
// regimes, otherwise a fixed auxiliary Voronoi split, so the rejection
// rates are honest sizes rather than post-selection artifacts.
inline std::vector<SimulateMetrics> simulate(const SyntheticScenario& sc,
                                             int replications, const AwsConfig& aws,
                                             int threads = 1) {
  sc.check();
  aws.check();
  if (replications < 1) throw ConfigError("simulate: need at least one replication");
  std::vector<SimulateMetrics> rows;
  for (int rep = 0; rep < replications; ++rep) {
    SimulateMetrics m;
    m.rep = rep + 1;
    m.seed = sc.seed + static_cast<std::uint64_t>(rep);

    const Eigen::MatrixXd* forced =
        sc.regime_seeds.size() > 0 ? &sc.regime_seeds : nullptr;
    const Landscape ls = gen_landscape(sc.n, sc.c, m.seed * 2 + 1, forced);
    const Eigen::MatrixXd dist = pairwise_distance(ls.coords);
    const Eigen::SparseMatrix<double> W = knn_row_normalized_w(dist, sc.w_knn);
    SyntheticScenario sc_rep = sc;
    sc_rep.seed = m.seed * 2 + 2;
    const GeoDataset ds = gen_data(sc_rep, ls, W);

    ModelSpec spec;
    spec.response = ds.response_name;
    for (const auto& nm : ds.input_names) spec.inputs.push_back({nm, false, true});
    spec.coords = {"x", "y"};
    const DesignMatrices dm = log_transform(ds, spec);

    const int k_min = static_cast<int>(2 * dm.X.cols());
    BandwidthSelection bw =
        select_bandwidth(dm.X, dm.y, dist, k_min, static_cast<int>(sc.n - 1), {}, threads);
    WeightState st = run_aws(dm.X, dm.y, ls.coords, bw.k, aws, {}, threads);
    RegimeAssignment extracted = extract_regimes(st, aws);
    m.c_extracted = extracted.c;
    m.ari = adjusted_rand_index(ls.labels, extracted.labels);

    // Response-independent partition for the test batteries: the true
    // landscape when it has regimes, otherwise a Voronoi split around the
    // first three locations (each is its own nearest centre, so all three
    // cells are nonempty).
    RegimeAssignment test_part;
    if (sc.c >= 2) {
      test_part = detail::assignment_from_labels(ls.labels);
    } else {
      if (sc.n < 3) throw ConfigError("simulate: need n >= 3 for the null partition");
      std::vector<int> lbl(static_cast<std::size_t>(sc.n));
      for (Eigen::Index i = 0; i < sc.n; ++i) {
        int best = 0;
        double bd = (ls.coords.row(i) - ls.coords.row(0)).squaredNorm();
        for (int r = 1; r < 3; ++r) {
          const double d = (ls.coords.row(i) - ls.coords.row(r)).squaredNorm();
          if (d < bd) {
            bd = d;
            best = r;
          }
        }
        lbl[static_cast<std::size_t>(i)] = best + 1;
      }
      test_part = detail::assignment_from_labels(lbl);
    }

    const LogDetFactor ldf(W);
    FitOptions fast;
    fast.compute_se = false;
    fast.n_threads = threads;
    FitOptions with_se;
    with_se.n_threads = threads;

    const Eigen::MatrixXd Xt = build_regime_design(dm.X, test_part);
    const FitResult sae_g = sae_fit(dm.X, dm.y, W, fast, {}, &ldf);
    const FitResult sae_r =
        sae_fit(Xt, dm.y, W, with_se, regime_design_info(dm.x_names, test_part), &ldf);
    const FitResult sarar_g = sarar_fit(dm.X, dm.y, W, W, fast, {}, &ldf, &ldf);
    m.lambda_hat = sae_g.lambda;
    m.rho_hat = sarar_g.rho;

    Eigen::VectorXd true_beta(Xt.cols());
    for (int r = 0; r < test_part.c; ++r) {
      const Eigen::VectorXd& b =
          sc.c >= 2 ? sc.beta[static_cast<std::size_t>(r)] : sc.beta[0];
      true_beta.segment(r * dm.X.cols(), dm.X.cols()) = b;
    }
    m.coef_rmse = std::sqrt((sae_r.beta - true_beta).squaredNorm() /
                            static_cast<double>(true_beta.size()));

    m.chow_p = chow_test(dm.X, dm.y, test_part).p;
    m.spatial_chow_p = spatial_chow_test(sae_g, sae_r).wald.p;
    rows.push_back(m);
  }
  return rows;
}

inline std::string simulate_csv(const SyntheticScenario& sc,
                                const std::vector<SimulateMetrics>& rows) {
  std::string out =
      "rep,seed,ari,c_extracted,coef_rmse,lambda_hat,lambda_bias,rho_hat,rho_bias,"
      "chow_p,chow_reject_5pct,spatial_chow_p,spatial_chow_reject_5pct\n";
  double sum_ari = 0, sum_rmse = 0, sum_lb = 0, sum_rb = 0, rej_c = 0, rej_s = 0;
  for (const auto& m : rows) {
    const double lb = m.lambda_hat - sc.lambda;
    const double rb = m.rho_hat - sc.rho;
    out += std::to_string(m.rep) + ',' + std::to_string(m.seed) + ',' +
           detail::csv_num(m.ari) + ',' + std::to_string(m.c_extracted) + ',' +
           detail::csv_num(m.coef_rmse) + ',' + detail::csv_num(m.lambda_hat) + ',' +
           detail::csv_num(lb) + ',' + detail::csv_num(m.rho_hat) + ',' +
           detail::csv_num(rb) + ',' + detail::csv_num(m.chow_p) + ',' +
           (m.chow_p < 0.05 ? "1" : "0") + ',' + detail::csv_num(m.spatial_chow_p) +
           ',' + (m.spatial_chow_p < 0.05 ? "1" : "0") + '\n';
    sum_ari += m.ari;
    sum_rmse += m.coef_rmse;
    sum_lb += lb;
    sum_rb += rb;
    rej_c += m.chow_p < 0.05 ? 1 : 0;
    rej_s += m.spatial_chow_p < 0.05 ? 1 : 0;
  }
  const double r = static_cast<double>(rows.size());
  out += "mean,," + detail::csv_num(sum_ari / r) + ",," + detail::csv_num(sum_rmse / r) +
         ",," + detail::csv_num(sum_lb / r) + ",," + detail::csv_num(sum_rb / r) + ',' +
         detail::csv_num(rej_c / r) + ',' + detail::csv_num(rej_c / r) + ',' +
         detail::csv_num(rej_s / r) + ',' + detail::csv_num(rej_s / r) + '\n';
  return out;
}

}  // namespace spregime
