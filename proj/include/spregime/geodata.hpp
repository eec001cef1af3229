#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "spregime/common.hpp"
#include "spregime/stats.hpp"

namespace spregime {

struct InputSpec {
  std::string name;
  bool endogenous = false;
  bool log = true;  // Cobb-Douglas inputs enter in logs unless told otherwise
};

struct InstrumentSpec {
  std::string name;
  bool log = false;  // prices/opportunity costs usually enter in levels
};

struct ModelSpec {
  std::string response;
  std::vector<InputSpec> inputs;
  std::vector<InstrumentSpec> instruments;
  std::array<std::string, 2> coords{"lon", "lat"};
  std::string id = "id";
  bool intercept = true;

  int n_endogenous() const {
    int c = 0;
    for (const auto& in : inputs) c += in.endogenous ? 1 : 0;
    return c;
  }

  void check() const {
    if (response.empty()) throw ConfigError("model spec: response column required");
    if (inputs.empty()) throw ConfigError("model spec: at least one input required");
    std::set<std::string> seen{response, coords[0], coords[1], id};
    for (const auto& in : inputs)
      if (!seen.insert(in.name).second)
        throw ConfigError("model spec: duplicate column role for '" + in.name + "'");
    for (const auto& iv : instruments)
      if (!seen.insert(iv.name).second)
        throw ConfigError("model spec: duplicate column role for '" + iv.name + "'");
    const int n_endo = n_endogenous();
    if (n_endo > 0 && static_cast<int>(instruments.size()) < n_endo)
      throw ConfigError("model spec: need at least as many instruments as endogenous inputs");
  }
};

inline void from_json(const nlohmann::json& j, InputSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.endogenous = j.value("endogenous", false);
  s.log = j.value("log", true);
}

inline void to_json(nlohmann::json& j, const InputSpec& s) {
  j = {{"name", s.name}, {"endogenous", s.endogenous}, {"log", s.log}};
}

inline void from_json(const nlohmann::json& j, InstrumentSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.log = j.value("log", false);
}

inline void to_json(nlohmann::json& j, const InstrumentSpec& s) {
  j = {{"name", s.name}, {"log", s.log}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  s.response = j.at("response").get<std::string>();
  s.inputs = j.at("inputs").get<std::vector<InputSpec>>();
  if (j.contains("instruments"))
    s.instruments = j.at("instruments").get<std::vector<InstrumentSpec>>();
  if (j.contains("coords")) {
    auto c = j.at("coords").get<std::vector<std::string>>();
    if (c.size() != 2) throw ConfigError("model spec: coords must list exactly two columns");
    s.coords = {c[0], c[1]};
  }
  s.id = j.value("id", std::string("id"));
  s.intercept = j.value("intercept", true);
  s.check();
}

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = {{"response", s.response},
       {"inputs", s.inputs},
       {"instruments", s.instruments},
       {"coords", std::vector<std::string>{s.coords[0], s.coords[1]}},
       {"id", s.id},
       {"intercept", s.intercept}};
}

struct GeoDataset {
  std::vector<std::string> ids;
  Eigen::MatrixXd coords;       // n x 2, planar or degrees treated as planar
  Eigen::VectorXd response;     // strictly positive levels
  Eigen::MatrixXd inputs;       // n x k, strictly positive levels
  Eigen::MatrixXd instruments;  // n x p, may be empty
  std::string response_name;
  std::vector<std::string> input_names;
  std::vector<std::string> instrument_names;
  std::array<std::string, 2> coord_names{"lon", "lat"};
  std::string id_name = "id";
  std::vector<std::size_t> dropped_rows;  // 1-based data-row numbers removed on load

  Eigen::Index n() const { return response.size(); }
  Eigen::Index k() const { return inputs.cols(); }
};

struct LoadOptions {
  bool drop_nonpositive = false;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row,
                         const std::string& col) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b != e && (*b == ' ' || *b == '\t')) ++b;
  while (e != b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  double v = 0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e)
    throw DataError("row " + std::to_string(row) + ", column '" + col +
                    "': non-numeric cell '" + cell + "'");
  return v;
}

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Strict CSV ingestion. Rows are numbered from 1 (header excluded) in all
// error messages. Nonpositive response/input values are a hard error by
// default; with drop_nonpositive the row is removed and recorded.
inline GeoDataset load_csv(const std::string& path, const ModelSpec& spec,
                           const LoadOptions& opts = {}) {
  spec.check();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError(path + ": empty file");
  const auto cols = detail::split_csv_line(header);
  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return i;
    throw DataError(path + ": missing column '" + name + "'");
  };

  const std::size_t idx_id = col_index(spec.id);
  const std::size_t idx_x = col_index(spec.coords[0]);
  const std::size_t idx_y = col_index(spec.coords[1]);
  const std::size_t idx_resp = col_index(spec.response);
  std::vector<std::size_t> idx_in, idx_iv;
  for (const auto& s : spec.inputs) idx_in.push_back(col_index(s.name));
  for (const auto& s : spec.instruments) idx_iv.push_back(col_index(s.name));

  const std::size_t k = idx_in.size(), p = idx_iv.size();
  std::vector<std::string> ids;
  std::vector<double> cx, cy, resp;
  std::vector<std::vector<double>> ins(k), ivs(p);
  std::vector<std::size_t> dropped;
  std::unordered_set<std::string> seen_ids;

  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != cols.size())
      throw DataError(path + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " fields, expected " +
                      std::to_string(cols.size()));

    const double vx = detail::parse_cell(cells[idx_x], row, spec.coords[0]);
    const double vy = detail::parse_cell(cells[idx_y], row, spec.coords[1]);
    if (!std::isfinite(vx) || !std::isfinite(vy))
      throw DataError("row " + std::to_string(row) + ": non-finite coordinate");
    const double vr = detail::parse_cell(cells[idx_resp], row, spec.response);
    std::vector<double> vi(k), vv(p);
    for (std::size_t c = 0; c < k; ++c)
      vi[c] = detail::parse_cell(cells[idx_in[c]], row, spec.inputs[c].name);
    for (std::size_t c = 0; c < p; ++c)
      vv[c] = detail::parse_cell(cells[idx_iv[c]], row, spec.instruments[c].name);

    std::string bad;
    if (!(vr > 0)) bad = spec.response;
    for (std::size_t c = 0; c < k && bad.empty(); ++c)
      if (!(vi[c] > 0)) bad = spec.inputs[c].name;
    for (std::size_t c = 0; c < p && bad.empty(); ++c)
      if (spec.instruments[c].log && !(vv[c] > 0)) bad = spec.instruments[c].name;
    if (!bad.empty()) {
      if (opts.drop_nonpositive) {
        dropped.push_back(row);
        continue;
      }
      throw DataError(path + ": row " + std::to_string(row) + ", column '" + bad +
                      "': nonpositive value (use drop mode to skip such rows)");
    }

    const std::string& id = cells[idx_id];
    if (!seen_ids.insert(id).second)
      throw DataError(path + ": row " + std::to_string(row) + ": duplicate id '" + id + "'");
    ids.push_back(id);
    cx.push_back(vx);
    cy.push_back(vy);
    resp.push_back(vr);
    for (std::size_t c = 0; c < k; ++c) ins[c].push_back(vi[c]);
    for (std::size_t c = 0; c < p; ++c) ivs[c].push_back(vv[c]);
  }

  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  if (n < 2 * static_cast<Eigen::Index>(k + 1))
    throw DataError(path + ": only " + std::to_string(n) +
                    " usable rows; need at least 2(k+1) = " + std::to_string(2 * (k + 1)));

  GeoDataset ds;
  ds.ids = std::move(ids);
  ds.coords.resize(n, 2);
  ds.response.resize(n);
  ds.inputs.resize(n, static_cast<Eigen::Index>(k));
  ds.instruments.resize(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.coords(i, 0) = cx[static_cast<std::size_t>(i)];
    ds.coords(i, 1) = cy[static_cast<std::size_t>(i)];
    ds.response[i] = resp[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < k; ++c)
      ds.inputs(i, static_cast<Eigen::Index>(c)) = ins[c][static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < p; ++c)
      ds.instruments(i, static_cast<Eigen::Index>(c)) = ivs[c][static_cast<std::size_t>(i)];
  }
  ds.response_name = spec.response;
  for (const auto& s : spec.inputs) ds.input_names.push_back(s.name);
  for (const auto& s : spec.instruments) ds.instrument_names.push_back(s.name);
  ds.coord_names = spec.coords;
  ds.id_name = spec.id;
  ds.dropped_rows = std::move(dropped);
  return ds;
}

// Writes the dataset back out with %.17g precision so a load/write/load
// cycle reproduces every numeric value exactly.
inline void write_csv(const GeoDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << ds.id_name << ',' << ds.coord_names[0] << ',' << ds.coord_names[1] << ','
      << ds.response_name;
  for (const auto& nm : ds.input_names) out << ',' << nm;
  for (const auto& nm : ds.instrument_names) out << ',' << nm;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    out << ds.ids[static_cast<std::size_t>(i)] << ',' << detail::fmt_g17(ds.coords(i, 0))
        << ',' << detail::fmt_g17(ds.coords(i, 1)) << ','
        << detail::fmt_g17(ds.response[i]);
    for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c)
      out << ',' << detail::fmt_g17(ds.inputs(i, c));
    for (Eigen::Index c = 0; c < ds.instruments.cols(); ++c)
      out << ',' << detail::fmt_g17(ds.instruments(i, c));
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

struct DesignMatrices {
  Eigen::VectorXd y;  // log response
  Eigen::MatrixXd X;  // intercept column (optional) then transformed inputs
  Eigen::MatrixXd Z;  // exogenous columns of X plus external instruments
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  std::vector<Eigen::Index> endogenous_cols;  // column indices into X
  Eigen::Index n_external_instruments = 0;    // trailing columns of Z
  bool intercept = true;
};

inline DesignMatrices log_transform(const GeoDataset& ds, const ModelSpec& spec) {
  spec.check();
  const Eigen::Index n = ds.n();
  const Eigen::Index k = static_cast<Eigen::Index>(spec.inputs.size());
  if (ds.inputs.cols() != k)
    throw ConfigError("log_transform: dataset does not match model spec input count");
  if (ds.response.minCoeff() <= 0)
    throw DataError("log_transform: nonpositive response");

  DesignMatrices dm;
  dm.intercept = spec.intercept;
  const Eigen::Index off = spec.intercept ? 1 : 0;
  dm.y = ds.response.array().log();
  dm.X.resize(n, k + off);
  if (spec.intercept) {
    dm.X.col(0).setOnes();
    dm.x_names.push_back("const");
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& in = spec.inputs[static_cast<std::size_t>(c)];
    if (in.log) {
      if (ds.inputs.col(c).minCoeff() <= 0)
        throw DataError("log_transform: nonpositive value in input '" + in.name + "'");
      dm.X.col(c + off) = ds.inputs.col(c).array().log();
      dm.x_names.push_back("log_" + in.name);
    } else {
      dm.X.col(c + off) = ds.inputs.col(c);
      dm.x_names.push_back(in.name);
    }
    if (in.endogenous) dm.endogenous_cols.push_back(c + off);
  }

  const Eigen::Index p = static_cast<Eigen::Index>(spec.instruments.size());
  const Eigen::Index k1 = k - static_cast<Eigen::Index>(dm.endogenous_cols.size());
  dm.Z.resize(n, off + k1 + p);
  Eigen::Index zc = 0;
  if (spec.intercept) {
    dm.Z.col(zc++).setOnes();
    dm.z_names.push_back("const");
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (spec.inputs[static_cast<std::size_t>(c)].endogenous) continue;
    dm.Z.col(zc) = dm.X.col(c + off);
    dm.z_names.push_back(dm.x_names[static_cast<std::size_t>(c + off)]);
    ++zc;
  }
  for (Eigen::Index c = 0; c < p; ++c) {
    const auto& iv = spec.instruments[static_cast<std::size_t>(c)];
    if (iv.log) {
      if (ds.instruments.col(c).minCoeff() <= 0)
        throw DataError("log_transform: nonpositive value in instrument '" + iv.name + "'");
      dm.Z.col(zc) = ds.instruments.col(c).array().log();
      dm.z_names.push_back("log_" + iv.name);
    } else {
      dm.Z.col(zc) = ds.instruments.col(c);
      dm.z_names.push_back(iv.name);
    }
    ++zc;
  }
  dm.n_external_instruments = p;
  return dm;
}

struct ValidationReport {
  std::size_t n = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> duplicate_coord_pairs;
  std::vector<std::string> rank_warnings;
  std::vector<std::pair<std::string, ColumnStats>> summaries;
};

// Report-only checks: duplicate locations, degenerate input columns, and a
// min/median/mean/max/sd summary per variable. Never mutates the dataset.
inline ValidationReport validate(const GeoDataset& ds) {
  ValidationReport rep;
  const Eigen::Index n = ds.n();
  rep.n = static_cast<std::size_t>(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if ((ds.coords.row(i) - ds.coords.row(j)).norm() == 0.0)
        rep.duplicate_coord_pairs.emplace_back(i, j);

  auto summarize = [&](const std::string& name, const Eigen::VectorXd& col) {
    std::vector<double> v(col.data(), col.data() + col.size());
    rep.summaries.emplace_back(name, column_stats(v));
  };
  summarize(ds.response_name, ds.response);
  for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) {
    summarize(ds.input_names[static_cast<std::size_t>(c)], ds.inputs.col(c));
    const double sd = rep.summaries.back().second.sd;
    if (!(sd > 0))
      rep.rank_warnings.push_back("input '" + ds.input_names[static_cast<std::size_t>(c)] +
                                  "' has zero variance");
  }
  for (Eigen::Index c = 0; c < ds.instruments.cols(); ++c)
    summarize(ds.instrument_names[static_cast<std::size_t>(c)], ds.instruments.col(c));

  if (ds.inputs.cols() > 0 && n > ds.inputs.cols()) {
    Eigen::MatrixXd design(n, ds.inputs.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(ds.inputs.cols()) = ds.inputs;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols())
      rep.rank_warnings.push_back("input matrix with intercept is rank-deficient");
  }
  return rep;
}

// Equirectangular projection of lon/lat degrees to kilometres around the
// dataset's mean latitude; optional pre-step when coordinates are not
// already planar.
inline Eigen::MatrixXd project_lonlat_km(const Eigen::MatrixXd& lonlat) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double kDegToRad = M_PI / 180.0;
  const double lat0 = lonlat.col(1).mean() * kDegToRad;
  Eigen::MatrixXd out(lonlat.rows(), 2);
  out.col(0) = lonlat.col(0) * kDegToRad * std::cos(lat0) * kEarthRadiusKm;
  out.col(1) = lonlat.col(1) * kDegToRad * kEarthRadiusKm;
  return out;
}

}  // namespace spregime
