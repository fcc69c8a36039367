/*
   Copyright 2026 The s2ndiff Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// JSON (de)serialization of the value types and CSV writers. Doubles in CSV
// are written with 17 significant digits so files round-trip exactly.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2n/dynamics.hpp"
#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/infotheory.hpp"
#include "s2n/metrics.hpp"
#include "s2n/samplers.hpp"
#include "s2n/schedule.hpp"
#include "s2n/snr_space.hpp"

namespace s2n {

using Json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void require_object(const Json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
}

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + what);
  }
}

inline double get_number(const Json& j, const std::string& key, const std::string& what) {
  if (!j.contains(key)) throw ConfigError(what + " is missing '" + key + "'");
  if (!j.at(key).is_number()) throw ConfigError(what + "." + key + " must be a number");
  return j.at(key).get<double>();
}

inline std::uint64_t get_uint(const Json& j, const std::string& key, const std::string& what) {
  const Json& v = j.at(key);
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) return v.get<std::uint64_t>();
  throw ConfigError(what + "." + key + " must be a nonnegative integer");
}

inline Vec to_vec(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Json from_vec(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Schedule

/// {"name": ..., "params": {...}, "t_min": ..., "t_max": ...}. Missing params
/// or window fall back to the family defaults; a given params object must be
/// complete. Warped: {"name": "Warped", "params": {"bend": b}, "inner": {...}}.
inline Schedule schedule_from_json(const Json& j) {
  detail::require_object(j, "schedule");
  detail::reject_unknown_keys(j, {"name", "params", "t_min", "t_max", "inner"}, "schedule");
  if (!j.contains("name") || !j.at("name").is_string()) throw ConfigError("schedule needs a string 'name'");
  const ScheduleFamily family = parse_family(j.at("name").get<std::string>());
  if (family == ScheduleFamily::custom) throw ConfigError("Custom schedules cannot be loaded from JSON");
  if (family == ScheduleFamily::warped) {
    if (!j.contains("inner")) throw ConfigError("Warped schedule needs 'inner'");
    const Schedule inner = schedule_from_json(j.at("inner"));
    double bend = 0.0;
    if (j.contains("params")) {
      detail::require_object(j.at("params"), "schedule.params");
      detail::reject_unknown_keys(j.at("params"), {"bend"}, "Warped params");
      bend = detail::get_number(j.at("params"), "bend", "Warped params");
    }
    return time_warp(inner, bend_warp(inner.t_min(), inner.t_max(), bend));
  }
  if (j.contains("inner")) throw ConfigError("'inner' is only valid for Warped schedules");
  ParamMap params = default_params(family);
  if (j.contains("params")) {
    detail::require_object(j.at("params"), "schedule.params");
    params.clear();
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
      if (!it.value().is_number()) throw ConfigError("schedule param '" + it.key() + "' must be a number");
      params[it.key()] = it.value().get<double>();
    }
  }
  auto [lo, hi] = default_window(family);
  if (j.contains("t_min")) lo = detail::get_number(j, "t_min", "schedule");
  if (j.contains("t_max")) hi = detail::get_number(j, "t_max", "schedule");
  return make_schedule(family, params, lo, hi);
}

inline Json schedule_to_json(const Schedule& s) {
  Json j;
  j["name"] = s.name();
  if (s.family() == ScheduleFamily::custom) throw ConfigError("Custom schedules cannot be serialized");
  if (s.family() == ScheduleFamily::warped) {
    if (!s.warp()->bend) throw ConfigError("only bend warps can be serialized");
    j["params"] = Json{{"bend", *s.warp()->bend}};
    j["inner"] = schedule_to_json(*s.inner());
    return j;
  }
  j["params"] = Json::object();
  for (const auto& [k, v] : s.params()) j["params"][k] = v;
  j["t_min"] = s.t_min();
  j["t_max"] = s.t_max();
  return j;
}

// ---------------------------------------------------------------------------
// GmmSpec

inline GmmSpec gmm_from_json(const Json& j) {
  detail::require_object(j, "gmm");
  detail::reject_unknown_keys(j, {"dim", "weights", "means", "covs"}, "gmm");
  for (const char* key : {"dim", "weights", "means", "covs"}) {
    if (!j.contains(key)) throw ConfigError(std::string("gmm is missing '") + key + "'");
  }
  if (!j.at("dim").is_number_integer()) throw ConfigError("gmm.dim must be an integer");
  GmmSpec g;
  g.dim = j.at("dim").get<int>();
  const Vec w = detail::to_vec(j.at("weights"), "gmm.weights");
  g.weights.assign(w.data(), w.data() + w.size());
  if (!j.at("means").is_array() || !j.at("covs").is_array()) throw ConfigError("gmm.means / gmm.covs must be arrays");
  for (const Json& m : j.at("means")) g.means.push_back(detail::to_vec(m, "gmm.means[i]"));
  for (const Json& c : j.at("covs")) {
    if (!c.is_array()) throw ConfigError("gmm.covs[i] must be a matrix");
    Mat m(static_cast<Eigen::Index>(c.size()), c.empty() ? 0 : static_cast<Eigen::Index>(c[0].size()));
    for (std::size_t r = 0; r < c.size(); ++r) {
      const Vec row = detail::to_vec(c[r], "gmm.covs[i][r]");
      if (row.size() != m.cols()) throw ConfigError("gmm.covs[i] rows have different lengths");
      m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    g.covs.push_back(m);
  }
  validate(g);
  return g;
}

inline Json gmm_to_json(const GmmSpec& g) {
  Json j;
  j["dim"] = g.dim;
  j["weights"] = g.weights;
  j["means"] = Json::array();
  for (const Vec& m : g.means) j["means"].push_back(detail::from_vec(m));
  j["covs"] = Json::array();
  for (const Mat& c : g.covs) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < c.rows(); ++r) rows.push_back(detail::from_vec(c.row(r).transpose()));
    j["covs"].push_back(rows);
  }
  return j;
}

// ---------------------------------------------------------------------------
// SamplerConfig

inline SamplerConfig sampler_config_from_json(const Json& j) {
  detail::require_object(j, "sampler");
  detail::reject_unknown_keys(
      j, {"kind", "rho", "gamma", "delta", "eta", "steps", "grid", "t_start", "t_end", "seed", "substeps"}, "sampler");
  SamplerConfig c;
  if (j.contains("kind")) c.kind = parse_sampler_kind(j.at("kind").get<std::string>());
  if (j.contains("rho")) c.rho = detail::get_number(j, "rho", "sampler");
  if (j.contains("gamma")) c.gamma = detail::get_number(j, "gamma", "sampler");
  if (j.contains("delta")) c.delta = detail::get_number(j, "delta", "sampler");
  if (j.contains("eta")) c.eta = detail::get_number(j, "eta", "sampler");
  if (j.contains("steps")) c.steps = detail::get_uint(j, "steps", "sampler");
  if (j.contains("grid")) c.grid = parse_grid_kind(j.at("grid").get<std::string>());
  if (j.contains("t_start")) c.t_start = detail::get_number(j, "t_start", "sampler");
  if (j.contains("t_end")) c.t_end = detail::get_number(j, "t_end", "sampler");
  if (j.contains("seed")) c.seed = detail::get_uint(j, "seed", "sampler");
  if (j.contains("substeps")) c.substeps = detail::get_uint(j, "substeps", "sampler");
  return c;
}

inline Json sampler_config_to_json(const SamplerConfig& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["rho"] = c.rho;
  j["gamma"] = c.gamma;
  j["delta"] = c.delta;
  j["eta"] = c.eta;
  j["steps"] = c.steps;
  j["grid"] = to_string(c.grid);
  if (c.t_start) j["t_start"] = *c.t_start;
  if (c.t_end) j["t_end"] = *c.t_end;
  j["seed"] = c.seed;
  j["substeps"] = c.substeps;
  return j;
}

// ---------------------------------------------------------------------------
// Reports

inline Json report_to_json(const SampleQualityReport& r) {
  Json j;
  j["n"] = r.n;
  j["dim"] = r.dim;
  j["mean_error_l2"] = r.mean_error_l2;
  j["cov_frobenius_error"] = r.cov_frobenius_error;
  j["energy_distance"] = r.energy_distance ? Json(*r.energy_distance) : Json(nullptr);
  j["gaussian_kl"] = r.gaussian_kl ? Json(*r.gaussian_kl) : Json(nullptr);
  return j;
}

inline SampleQualityReport report_from_json(const Json& j) {
  SampleQualityReport r;
  r.n = j.at("n").get<std::size_t>();
  r.dim = j.at("dim").get<int>();
  r.mean_error_l2 = j.at("mean_error_l2").get<double>();
  r.cov_frobenius_error = j.at("cov_frobenius_error").get<double>();
  if (!j.at("energy_distance").is_null()) r.energy_distance = j.at("energy_distance").get<double>();
  if (!j.at("gaussian_kl").is_null()) r.gaussian_kl = j.at("gaussian_kl").get<double>();
  return r;
}

/// Pretty JSON with a trailing newline; numbers use nlohmann's shortest
/// round-trip formatting.
inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {
inline void csv_row(std::ostream& os, std::initializer_list<double> fixed, const Vec* tail = nullptr) {
  bool first = true;
  for (double v : fixed) {
    if (!first) os << ',';
    os << format_double(v);
    first = false;
  }
  if (tail) {
    for (Eigen::Index i = 0; i < tail->size(); ++i) {
      if (!first) os << ',';
      os << format_double((*tail)[i]);
      first = false;
    }
  }
  os << '\n';
}

inline void indexed_header(std::ostream& os, const std::string& lead, const std::string& prefix, int dim) {
  os << lead;
  for (int i = 0; i < dim; ++i) os << ',' << prefix << i;
  os << '\n';
}
}  // namespace detail

/// `t,alpha,sigma,lambda,dalpha_dt,dlambda_dt` on `grid_size` uniform points.
inline std::string schedule_csv(const Schedule& s, std::size_t grid_size) {
  if (grid_size < 2) throw ConfigError("schedule grid needs at least 2 points");
  std::ostringstream os;
  os << "t,alpha,sigma,lambda,dalpha_dt,dlambda_dt\n";
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double t = (i + 1 == grid_size) ? s.t_max()
                                          : s.t_min() + (s.t_max() - s.t_min()) * static_cast<double>(i) /
                                                            static_cast<double>(grid_size - 1);
    const SchedulePoint p = s.eval(t);
    detail::csv_row(os, {p.t, p.alpha, p.sigma, p.lambda, p.dalpha_dt, p.dlambda_dt});
  }
  return os.str();
}

/// `sample_id,x_0..x_{D-1}`.
inline std::string samples_csv(const SampleMatrix& x) {
  std::ostringstream os;
  detail::indexed_header(os, "sample_id", "x_", static_cast<int>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    os << i;
    for (Eigen::Index j = 0; j < x.cols(); ++j) os << ',' << format_double(x(i, j));
    os << '\n';
  }
  return os.str();
}

/// `sample_id,step,t,z_0..z_{D-1}`.
inline std::string trajectories_csv(const std::vector<Trajectory>& trajs, int dim) {
  std::ostringstream os;
  detail::indexed_header(os, "sample_id,step,t", "z_", dim);
  for (const Trajectory& tr : trajs) {
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      os << tr.sample_id << ',' << k << ',' << format_double(tr.times[k]);
      for (Eigen::Index j = 0; j < tr.states[k].size(); ++j) os << ',' << format_double(tr.states[k][j]);
      os << '\n';
    }
  }
  return os.str();
}

/// `step,t,z_0..z_{D-1}` for a forward path.
inline std::string forward_path_csv(const ForwardPath& path) {
  std::ostringstream os;
  const int dim = path.states.empty() ? 0 : static_cast<int>(path.states.front().size());
  detail::indexed_header(os, "step,t", "z_", dim);
  for (std::size_t k = 0; k < path.states.size(); ++k) {
    os << k << ',' << format_double(path.times[k]);
    for (Eigen::Index j = 0; j < path.states[k].size(); ++j) os << ',' << format_double(path.states[k][j]);
    os << '\n';
  }
  return os.str();
}

/// `lambda,tilde_alpha,tilde_sigma`.
inline std::string snrspace_csv(const Schedule& s, std::size_t points) {
  if (points < 2) throw ConfigError("snrspace grid needs at least 2 points");
  const auto [lo, hi] = lambda_range(s);
  std::ostringstream os;
  os << "lambda,tilde_alpha,tilde_sigma\n";
  for (std::size_t i = 0; i < points; ++i) {
    const double lam = (i + 1 == points) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    const SnrPoint p = tilde_eval(s, lam);
    detail::csv_row(os, {p.lambda, p.tilde_alpha, p.tilde_sigma});
  }
  return os.str();
}

/// `lambda,mmse,dmi_dlambda[,mi_closed]`.
inline std::string info_csv(const std::vector<InfoCurvePoint>& curve) {
  const bool closed = !curve.empty() && curve.front().mi_closed.has_value();
  std::ostringstream os;
  os << "lambda,mmse,dmi_dlambda" << (closed ? ",mi_closed" : "") << '\n';
  for (const InfoCurvePoint& c : curve) {
    if (closed) {
      detail::csv_row(os, {c.lambda, c.mmse, c.dmi_dlambda, *c.mi_closed});
    } else {
      detail::csv_row(os, {c.lambda, c.mmse, c.dmi_dlambda});
    }
  }
  return os.str();
}

}  // namespace s2n
