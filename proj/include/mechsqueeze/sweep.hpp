#pragma once

// Two-dimensional parameter sweeps described by a JSON SweepSpec.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mechsqueeze/analytic.hpp"
#include "mechsqueeze/errors.hpp"
#include "mechsqueeze/io.hpp"
#include "mechsqueeze/model.hpp"
#include "mechsqueeze/optimize.hpp"
#include "mechsqueeze/parallel.hpp"
#include "mechsqueeze/steadystate.hpp"

namespace mechsqueeze {

enum class Objective { VxAtGivenDelta, VxOptimalDelta, Bae, V0, Analytic };

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::VxAtGivenDelta: return "v_x_at_given_delta";
    case Objective::VxOptimalDelta: return "v_x_optimal_delta";
    case Objective::Bae: return "bae";
    case Objective::V0: return "v0";
    case Objective::Analytic: return "analytic";
  }
  return "?";
}

inline std::optional<Objective> parse_objective(std::string_view s) {
  for (auto o : {Objective::VxAtGivenDelta, Objective::VxOptimalDelta, Objective::Bae,
                 Objective::V0, Objective::Analytic}) {
    if (to_string(o) == s) return o;
  }
  return std::nullopt;
}

/// Parameters an axis may sweep. chi_prime sets chi = chi' sqrt(gamma^2 + z)
/// after every other parameter of the grid point is known.
inline const std::vector<std::string>& sweepable_parameters() {
  static const std::vector<std::string> names{"gamma", "chi", "delta", "theta", "mu",
                                              "eta",   "n",   "chi_prime"};
  return names;
}

struct SweepAxis {
  std::string param;
  std::vector<double> values;
};

struct SweepSpec {
  SweepAxis axis1;
  std::optional<SweepAxis> axis2;
  SystemParams fixed;
  Objective objective = Objective::VxAtGivenDelta;
};

/// Spec validation failure; `where` is a JSON pointer or "line L, column C".
class SpecError : public Error {
 public:
  SpecError(std::string where, const std::string& message)
      : Error(ErrorCode::InvalidSpec, where + ": " + message), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

inline std::vector<double> linear_grid(double start, double stop, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = count == 1 ? start : start + (stop - start) * static_cast<double>(i) / (count - 1.0);
  }
  if (count > 1) out.back() = stop;
  return out;
}

inline std::vector<double> log_grid(double start, double stop, std::size_t count) {
  std::vector<double> out = linear_grid(std::log(start), std::log(stop), count);
  for (auto& v : out) v = std::exp(v);
  out.front() = start;
  if (count > 1) out.back() = stop;
  return out;
}

namespace detail {

inline double* param_slot(SystemParams& p, std::string_view name) {
  if (name == "gamma") return &p.gamma;
  if (name == "chi") return &p.chi;
  if (name == "delta") return &p.delta;
  if (name == "theta") return &p.theta;
  if (name == "mu") return &p.mu;
  if (name == "eta") return &p.eta;
  if (name == "n") return &p.n_thermal;
  return nullptr;
}

inline double require_number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw SpecError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SpecError(path, "must be finite");
  return v;
}

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& path,
                                std::initializer_list<std::string_view> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) throw SpecError(path + "/" + item.key(), "unknown field");
  }
}

inline SweepAxis parse_axis(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw SpecError(path, "expected an object");
  reject_unknown_keys(j, path, {"param", "values", "start", "stop", "count", "scale"});
  SweepAxis axis;
  if (!j.contains("param") || !j["param"].is_string()) {
    throw SpecError(path + "/param", "expected a parameter name");
  }
  axis.param = j["param"].get<std::string>();
  bool known = false;
  for (const auto& n : sweepable_parameters()) known = known || n == axis.param;
  if (!known) throw SpecError(path + "/param", "unknown parameter '" + axis.param + "'");

  if (j.contains("values")) {
    for (auto key : {"start", "stop", "count", "scale"}) {
      if (j.contains(key)) throw SpecError(path + "/" + key, "cannot be combined with values");
    }
    const auto& vals = j["values"];
    if (!vals.is_array()) throw SpecError(path + "/values", "expected an array");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      axis.values.push_back(require_number(vals[i], path + "/values/" + std::to_string(i)));
    }
  } else {
    for (auto key : {"start", "stop", "count"}) {
      if (!j.contains(key)) throw SpecError(path + "/" + key, "required when values is absent");
    }
    const double start = require_number(j["start"], path + "/start");
    const double stop = require_number(j["stop"], path + "/stop");
    if (!j["count"].is_number_integer() || j["count"].get<long>() < 1) {
      throw SpecError(path + "/count", "expected a positive integer");
    }
    const auto count = j["count"].get<std::size_t>();
    std::string scale = "linear";
    if (j.contains("scale")) {
      if (!j["scale"].is_string()) throw SpecError(path + "/scale", "expected \"linear\" or \"log\"");
      scale = j["scale"].get<std::string>();
    }
    if (scale == "linear") {
      axis.values = linear_grid(start, stop, count);
    } else if (scale == "log") {
      if (!(start > 0.0) || !(stop > 0.0)) {
        throw SpecError(path, "log scale needs start > 0 and stop > 0");
      }
      axis.values = log_grid(start, stop, count);
    } else {
      throw SpecError(path + "/scale", "expected \"linear\" or \"log\"");
    }
  }

  if (axis.values.empty()) throw SpecError(path + "/values", "grid is empty");
  if (axis.values.size() > 1) {
    const bool up = axis.values[1] > axis.values[0];
    for (std::size_t i = 1; i < axis.values.size(); ++i) {
      const bool ordered = up ? axis.values[i] > axis.values[i - 1]
                              : axis.values[i] < axis.values[i - 1];
      if (!ordered) {
        throw SpecError(path + "/values/" + std::to_string(i), "grid must be strictly monotone");
      }
    }
  }
  return axis;
}

inline std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline SweepSpec parse_sweep_spec(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("/", "expected an object");
  detail::reject_unknown_keys(j, "", {"axis1", "axis2", "fixed", "objective"});
  SweepSpec spec;
  if (!j.contains("axis1")) throw SpecError("/axis1", "required");
  spec.axis1 = detail::parse_axis(j["axis1"], "/axis1");
  if (j.contains("axis2")) spec.axis2 = detail::parse_axis(j["axis2"], "/axis2");

  if (!j.contains("objective") || !j["objective"].is_string()) {
    throw SpecError("/objective", "expected one of v_x_at_given_delta, v_x_optimal_delta, bae, v0, analytic");
  }
  const auto obj = parse_objective(j["objective"].get<std::string>());
  if (!obj) {
    throw SpecError("/objective", "unknown objective '" + j["objective"].get<std::string>() + "'");
  }
  spec.objective = *obj;

  std::vector<std::string> swept{spec.axis1.param};
  if (spec.axis2) {
    if (spec.axis2->param == spec.axis1.param) {
      throw SpecError("/axis2/param", "same parameter as axis1");
    }
    swept.push_back(spec.axis2->param);
  }
  auto is_swept = [&](std::string_view name) {
    for (const auto& s : swept) {
      if (s == name) return true;
    }
    return false;
  };
  if (is_swept("chi") && is_swept("chi_prime")) {
    throw SpecError("/axis2/param", "chi and chi_prime cannot both be swept");
  }

  if (j.contains("fixed")) {
    const auto& f = j["fixed"];
    if (!f.is_object()) throw SpecError("/fixed", "expected an object");
    for (const auto& item : f.items()) {
      const std::string path = "/fixed/" + item.key();
      double* slot = detail::param_slot(spec.fixed, item.key());
      if (!slot) throw SpecError(path, "unknown parameter");
      if (is_swept(item.key()) || (item.key() == "chi" && is_swept("chi_prime"))) {
        throw SpecError(path, "parameter is swept");
      }
      *slot = detail::require_number(item.value(), path);
    }
  }
  return spec;
}

inline SweepSpec parse_sweep_spec_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError(detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1), "malformed JSON");
  }
  return parse_sweep_spec(j);
}

/// Names of the SystemParams fields set by the axes (chi when chi_prime is swept).
inline std::vector<std::string> swept_fields(const SweepSpec& spec) {
  std::vector<std::string> out;
  auto add = [&](const std::string& name) { out.push_back(name == "chi_prime" ? "chi" : name); };
  add(spec.axis1.param);
  if (spec.axis2) add(spec.axis2->param);
  return out;
}

inline nlohmann::json fixed_to_json(const SweepSpec& spec) {
  nlohmann::json j = params_to_json(spec.fixed);
  for (const auto& name : swept_fields(spec)) j.erase(name);
  return j;
}

inline std::string fixed_comment(const SweepSpec& spec) {
  std::string out;
  const auto fixed = fixed_to_json(spec);
  for (const char* key : {"gamma", "chi", "delta", "theta", "mu", "eta", "n"}) {
    if (!fixed.contains(key)) continue;
    out += (out.empty() ? "" : " ") + std::string(key) + "=" + format_number(fixed[key].get<double>());
  }
  return out;
}

inline nlohmann::json axis_to_json(const SweepAxis& axis) {
  return {{"param", axis.param}, {"values", axis.values}};
}

inline nlohmann::json sweep_spec_to_json(const SweepSpec& spec) {
  nlohmann::json j{{"axis1", axis_to_json(spec.axis1)}, {"objective", to_string(spec.objective)}};
  if (spec.axis2) j["axis2"] = axis_to_json(*spec.axis2);
  j["fixed"] = fixed_to_json(spec);
  return j;
}

struct SweepRow {
  double a1 = 0.0;
  double a2 = std::numeric_limits<double>::quiet_NaN();
  SystemParams params;  ///< resolved parameters of this grid point
  double v_x = std::numeric_limits<double>::quiet_NaN();
  double v_db = std::numeric_limits<double>::quiet_NaN();
  double v0 = std::numeric_limits<double>::quiet_NaN();
  double delta_opt = std::numeric_limits<double>::quiet_NaN();
  bool stable = false;
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;  ///< axis1-major
  std::string started;
  std::string finished;
};

struct SweepOptions {
  int jobs = 1;
  OptimizeOptions optimize;
};

/// Grid point parameters; chi_prime is applied last.
inline SystemParams resolve_point(const SweepSpec& spec, double a1, double a2) {
  SystemParams p = spec.fixed;
  std::optional<double> chi_prime;
  auto assign = [&](const std::string& name, double v) {
    if (name == "chi_prime") {
      chi_prime = v;
    } else {
      *detail::param_slot(p, name) = v;
    }
  };
  assign(spec.axis1.param, a1);
  if (spec.axis2) assign(spec.axis2->param, a2);
  if (chi_prime) {
    const double z = 8.0 * p.eta * p.mu * p.gamma * (p.n_thermal + p.mu / (2.0 * p.gamma) + 0.5);
    p.chi = *chi_prime * std::sqrt(p.gamma * p.gamma + z);
  }
  return p;
}

/// Evaluates the objective at one point. Physics and convergence failures are
/// recorded in the row status; the objective columns stay NaN.
inline SweepRow evaluate_point(Objective objective, const SystemParams& p,
                               const OptimizeOptions& opts = {}) {
  SweepRow row;
  row.params = p;
  try {
    const ValidatedParams vp = validate(p);
    row.v0 = v0(vp);
    switch (objective) {
      case Objective::VxAtGivenDelta: {
        row.stable = is_stable(vp);
        if (!row.stable) {
          row.status = "unstable";
          return row;
        }
        const auto r = conditional_steady_state(vp, opts.steady);
        row.v_x = r.cov.v_x;
        row.residual = r.residual;
        break;
      }
      case Objective::VxOptimalDelta: {
        const auto r = optimal_detuning(vp, opts);
        row.stable = true;
        row.v_x = r.v_x_opt;
        row.delta_opt = r.delta_opt;
        row.residual = riccati_residual(vp.with_theta(std::numbers::pi / 4).with_delta(r.delta_opt),
                                        r.cov);
        break;
      }
      case Objective::Bae:
        row.stable = true;
        row.v_x = bae_variance(vp);
        row.residual = 0.0;
        break;
      case Objective::V0:
        row.stable = true;
        row.v_x = row.v0;
        row.residual = 0.0;
        break;
      case Objective::Analytic: {
        const auto dq = derived(vp);
        const auto a = analytic_optimum(dq.chi_prime);
        row.stable = true;
        row.v_x = row.v0 * a.v_ratio;
        row.delta_opt = (a.delta_offset_prime + dq.chi_prime) * std::sqrt(p.gamma * p.gamma + dq.z);
        row.residual = 0.0;
        break;
      }
    }
    if (row.v_x > 0.0) row.v_db = to_db(row.v_x);
  } catch (const ConvergenceError&) {
    row.v_x = std::numeric_limits<double>::quiet_NaN();
    row.status = "no_convergence";
  } catch (const ParameterError&) {
    row.v_x = std::numeric_limits<double>::quiet_NaN();
    row.status = "invalid";
  } catch (const Error& e) {
    row.v_x = std::numeric_limits<double>::quiet_NaN();
    row.status = std::string(to_string(e.code()));
  }
  return row;
}

inline SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& opts = {}) {
  SweepResult out;
  out.spec = spec;
  out.started = utc_timestamp();
  const std::size_t n1 = spec.axis1.values.size();
  const std::size_t n2 = spec.axis2 ? spec.axis2->values.size() : 1;
  out.rows.resize(n1 * n2);
  parallel_for(out.rows.size(), opts.jobs, [&](std::size_t idx) {
    const std::size_t i = idx / n2;
    const std::size_t k = idx % n2;
    const double a1 = spec.axis1.values[i];
    const double a2 = spec.axis2 ? spec.axis2->values[k] : std::numeric_limits<double>::quiet_NaN();
    SweepRow row = evaluate_point(spec.objective, resolve_point(spec, a1, a2), opts.optimize);
    row.a1 = a1;
    row.a2 = a2;
    out.rows[idx] = std::move(row);
  });
  out.finished = utc_timestamp();
  return out;
}

/// Extra 0/1 columns marking v_x below each threshold (NaN where v_x is NaN).
struct ThresholdColumn {
  std::string name;
  double threshold;
};

inline void write_sweep_csv(std::ostream& os, const SweepResult& r,
                            const std::vector<ThresholdColumn>& thresholds = {}) {
  os << "# mechsqueeze " << kVersion << '\n';
  os << "# objective=" << to_string(r.spec.objective) << '\n';
  os << "# fixed " << fixed_comment(r.spec) << '\n';
  os << "# axis1=" << r.spec.axis1.param << " count=" << r.spec.axis1.values.size() << '\n';
  if (r.spec.axis2) {
    os << "# axis2=" << r.spec.axis2->param << " count=" << r.spec.axis2->values.size() << '\n';
  }
  os << "# started=" << r.started << " finished=" << r.finished << '\n';
  os << r.spec.axis1.param;
  if (r.spec.axis2) os << ',' << r.spec.axis2->param;
  os << ",v_x,v_db,v0,delta_opt,stable,residual,status";
  for (const auto& t : thresholds) os << ',' << t.name;
  os << '\n';
  for (const auto& row : r.rows) {
    os << format_number(row.a1);
    if (r.spec.axis2) os << ',' << format_number(row.a2);
    os << ',' << format_number(row.v_x) << ',' << format_number(row.v_db) << ','
       << format_number(row.v0) << ',' << format_number(row.delta_opt) << ','
       << (row.stable ? 1 : 0) << ',' << format_number(row.residual) << ',' << row.status;
    for (const auto& t : thresholds) {
      os << ',' << (std::isnan(row.v_x) ? "nan" : (row.v_x < t.threshold ? "1" : "0"));
    }
    os << '\n';
  }
}

inline nlohmann::json sweep_to_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{r.spec.axis1.param, row.a1},
                     {"v_x", json_number(row.v_x)},
                     {"v_db", json_number(row.v_db)},
                     {"v0", json_number(row.v0)},
                     {"delta_opt", json_number(row.delta_opt)},
                     {"stable", row.stable},
                     {"residual", json_number(row.residual)},
                     {"status", row.status},
                     {"params", params_to_json(row.params)}};
    if (r.spec.axis2) j[r.spec.axis2->param] = row.a2;
    rows.push_back(std::move(j));
  }
  return {{"version", kVersion},
          {"started", r.started},
          {"finished", r.finished},
          {"spec", sweep_spec_to_json(r.spec)},
          {"rows", std::move(rows)}};
}

}  // namespace mechsqueeze
