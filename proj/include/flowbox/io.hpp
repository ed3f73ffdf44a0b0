#pragma once

// Chart and report documents (JSON) and CSV exports.

#include "flowbox/common.hpp"
#include "flowbox/dsl.hpp"
#include "flowbox/field.hpp"
#include "flowbox/flowbox.hpp"
#include "flowbox/integrate.hpp"
#include "flowbox/verify.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

namespace flowbox::io {

using nlohmann::json;

/// How a field is named on the command line and inside chart files.
struct FieldSpec {
  std::string reference;  // "builtin:<name>" or "dsl:<dim>:<source>"
  std::optional<Point> domain_center;
  std::optional<double> domain_radius;
  std::optional<double> declared_lipschitz;
};

inline constexpr double kDefaultDslRadius = 10.0;

/// Resolves a field reference. DSL fields default to a ball of radius 10
/// about `fallback_center` (the chart base point on the command line).
inline VectorField resolve_field(const FieldSpec& spec, const std::optional<Point>& fallback_center = {}) {
  const std::string& ref = spec.reference;
  if (ref.rfind("builtin:", 0) == 0) {
    const std::string name = ref.substr(8);
    auto f = find_builtin(name);
    if (!f) throw Error(ErrorKind::input, "unknown builtin field '" + name + "'");
    f->label = name;
    return *f;
  }
  if (ref.rfind("dsl:", 0) == 0) {
    const auto colon = ref.find(':', 4);
    if (colon == std::string::npos) throw Error(ErrorKind::input, "expected dsl:<dim>:<source>");
    const std::string dim_text = ref.substr(4, colon - 4);
    int dim = 0;
    const auto res = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), dim);
    if (res.ec != std::errc() || res.ptr != dim_text.data() + dim_text.size() || dim < 1) {
      throw Error(ErrorKind::input, "invalid dimension '" + dim_text + "' in field reference");
    }
    Point center = spec.domain_center ? *spec.domain_center
                                      : (fallback_center ? *fallback_center : Point(Point::Zero(dim)));
    if (center.size() != dim) throw Error(ErrorKind::input, "domain center dimension does not match the field");
    return dsl::make_field(ref.substr(colon + 1), dim, center, spec.domain_radius.value_or(kDefaultDslRadius),
                           spec.declared_lipschitz);
  }
  throw Error(ErrorKind::input, "field reference must start with 'builtin:' or 'dsl:'");
}

inline json to_json(const Point& p) {
  json a = json::array();
  for (Eigen::Index i = 0; i < p.size(); ++i) a.push_back(p[i]);
  return a;
}

inline json to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Point point_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::parse, "expected an array of numbers");
  Point p(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) p[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return p;
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 1 || cols < 1 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw Error(ErrorKind::parse, "matrix shape does not match its data");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data.at(static_cast<std::size_t>(i * cols + j2)).get<double>();
  }
  return m;
}

inline json to_json(const ChartTolerances& t) { return {{"integration", t.integration}, {"crossing", t.crossing}}; }

inline json field_spec_json(const FieldSpec& spec, const VectorField& field) {
  return {{"reference", spec.reference},
          {"domain_center", to_json(field.domain_center)},
          {"domain_radius", field.domain_radius},
          {"declared_lipschitz", spec.declared_lipschitz ? json(*spec.declared_lipschitz) : json(nullptr)}};
}

inline json chart_to_json(const FlowBoxChart& chart, const FieldSpec& spec, const json& config = json::object()) {
  const NormalizationRecord& rec = chart.normalization;
  json j;
  j["format"] = "flowbox-chart";
  j["tool_version"] = kToolVersion;
  j["field"] = field_spec_json(spec, chart.field);
  j["base_point"] = to_json(rec.base_point);
  j["B"] = to_json(rec.linear_map);
  j["B_inverse"] = to_json(rec.linear_map_inverse);
  j["used_swap_map"] = rec.used_swap_map;
  j["psi_bar"] = rec.psi_bar ? to_json(*rec.psi_bar) : json(nullptr);
  j["y_vector"] = to_json(rec.y_vector);
  j["z_vector"] = to_json(rec.z_vector);
  j["chi"] = to_json(chart.chi);
  j["r1"] = chart.r1;
  j["T"] = chart.T;
  j["r2"] = chart.r2;
  j["K"] = chart.K;
  j["K_exact"] = chart.K_exact;
  j["M"] = chart.M;
  j["K_phi"] = chart.K_phi;
  j["K_phi_inv"] = chart.K_phi_inv;
  j["tolerances"] = to_json(chart.tolerances);
  j["construction"] = {{"initial_radius", chart.options.initial_radius},
                       {"samples", chart.options.samples},
                       {"seed", chart.options.seed},
                       {"safety_factor", kEstimateSafetyFactor},
                       {"radius_margin", kRadiusMargin}};
  j["config"] = config;
  return j;
}

struct LoadedChart {
  FlowBoxChart chart;
  FieldSpec spec;
  json document;
};

/// Rebuilds a chart from its document without re-running the construction.
/// The stored constants must satisfy the chart identities exactly.
inline LoadedChart chart_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "flowbox-chart") throw Error(ErrorKind::parse, "not a chart document");
    LoadedChart out;
    out.document = j;
    const json& fj = j.at("field");
    out.spec.reference = fj.at("reference").get<std::string>();
    out.spec.domain_center = point_from_json(fj.at("domain_center"));
    out.spec.domain_radius = fj.at("domain_radius").get<double>();
    if (!fj.at("declared_lipschitz").is_null()) out.spec.declared_lipschitz = fj.at("declared_lipschitz").get<double>();
    const VectorField field = resolve_field(out.spec);

    NormalizationRecord rec;
    rec.base_point = point_from_json(j.at("base_point"));
    rec.linear_map = matrix_from_json(j.at("B"));
    rec.linear_map_inverse = matrix_from_json(j.at("B_inverse"));
    rec.used_swap_map = j.at("used_swap_map").get<bool>();
    if (!j.at("psi_bar").is_null()) rec.psi_bar = point_from_json(j.at("psi_bar"));
    rec.y_vector = point_from_json(j.at("y_vector"));
    rec.z_vector = point_from_json(j.at("z_vector"));
    const auto n = field.dimension;
    if (rec.base_point.size() != n || rec.linear_map.rows() != n || rec.linear_map.cols() != n ||
        rec.linear_map_inverse.rows() != n || rec.linear_map_inverse.cols() != n || rec.z_vector.size() != n) {
      throw Error(ErrorKind::parse, "chart dimensions do not match the field");
    }

    FlowBoxChart& c = out.chart;
    c.field = field;
    c.field_reference = out.spec.reference;
    c.normalization = rec;
    c.normalized = apply_normalization(field, rec);
    c.chi = point_from_json(j.at("chi"));
    c.r1 = j.at("r1").get<double>();
    c.T = j.at("T").get<double>();
    c.r2 = j.at("r2").get<double>();
    c.K = j.at("K").get<double>();
    c.K_exact = j.at("K_exact").get<bool>();
    c.M = j.at("M").get<double>();
    c.K_phi = j.at("K_phi").get<double>();
    c.K_phi_inv = j.at("K_phi_inv").get<double>();
    c.tolerances.integration = j.at("tolerances").at("integration").get<double>();
    c.tolerances.crossing = j.at("tolerances").at("crossing").get<double>();
    const json& cj = j.at("construction");
    c.options.initial_radius = cj.at("initial_radius").get<double>();
    c.options.samples = cj.at("samples").get<int>();
    c.options.seed = cj.at("seed").get<std::uint64_t>();
    c.options.tolerances = c.tolerances;

    if (c.chi.size() != n || !(c.r1 > 0.0) || c.T != c.r1 / 4.0 || c.r2 != std::min(c.r1 / 10.0, c.T / 2.0) ||
        c.K_phi != phi_lipschitz_bound(c.K, c.T) || c.K_phi_inv != phi_inverse_lipschitz_bound(c.K, c.T) ||
        !(c.tolerances.integration > 0.0) || !(c.tolerances.crossing > 0.0)) {
      throw Error(ErrorKind::parse, "chart constants are inconsistent (T, r2, K_phi or K_phi_inv)");
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed chart document: ") + e.what());
  }
}

inline json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("invalid JSON: ") + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::input, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::input, "cannot write '" + path + "'");
  out << text;
}

inline LoadedChart load_chart(const std::string& path) { return chart_from_json(parse_document(read_file(path))); }

/// FNV-1a over the canonical serialization.
inline std::string document_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json to_json(const ConjugacyReport& r) {
  return {{"samples", r.samples},
          {"attempts", r.attempts},
          {"rejected", r.rejected},
          {"rejection_rate", r.rejection_rate()},
          {"max_conjugacy_residual", r.max_conjugacy_residual},
          {"max_roundtrip_residual", r.max_roundtrip_residual},
          {"max_foot_invariance_residual", r.max_foot_invariance_residual},
          {"max_time_shift_residual", r.max_time_shift_residual},
          {"t_range", {-r.t_max, r.t_max}},
          {"seed", r.seed},
          {"tolerances", to_json(r.tolerances)},
          {"thresholds",
           {{"conjugacy", r.thresholds.conjugacy},
            {"roundtrip", r.thresholds.roundtrip},
            {"foot_invariance", r.thresholds.foot_invariance},
            {"max_rejection_rate", r.thresholds.max_rejection_rate}}},
          {"passed", r.passed},
          {"diagnostics", r.diagnostics}};
}

inline json to_json(const LipschitzScanReport& r) {
  return {{"pair_count", r.pair_count},
          {"max_ratio_phi", r.max_ratio_phi},
          {"bound_phi", r.bound_phi},
          {"max_ratio_phi_inv", r.max_ratio_phi_inv},
          {"bound_phi_inv", r.bound_phi_inv},
          {"violations", r.violations},
          {"violations_phi", r.violations_phi},
          {"violations_phi_inv", r.violations_phi_inv},
          {"injectivity_violations", r.injectivity_violations},
          {"K_exact", r.K_exact},
          {"seed", r.seed}};
}

inline json to_json(const DependenceReport& r) {
  return {{"pair_count", r.pair_count}, {"evaluated", r.evaluated}, {"rejected", r.rejected},
          {"violations", r.violations}, {"max_ratio", r.max_ratio},  {"min_ratio", r.min_ratio},
          {"K", r.K},                   {"K_exact", r.K_exact},      {"t_max", r.t_max},
          {"slack", r.slack},           {"tolerance", r.tolerance},  {"seed", r.seed}};
}

inline json to_json(const FlowAxiomsReport& r) {
  return {{"samples", r.samples},
          {"max_identity_residual", r.max_identity_residual},
          {"max_semigroup_residual", r.max_semigroup_residual},
          {"half_width", r.half_width},
          {"tolerance", r.tolerance},
          {"seed", r.seed}};
}

inline json to_json(const JacobianJumpReport& r) {
  json slopes = json::array();
  for (const auto& [right, left] : r.one_sided_slopes) slopes.push_back({{"right", right}, {"left", left}});
  return {{"probe_point", to_json(r.probe_point)},
          {"axis", r.axis},
          {"component", r.component},
          {"step_sizes", r.step_sizes},
          {"one_sided_slopes", slopes},
          {"jumps", r.jumps},
          {"estimated_jump", r.estimated_jump},
          {"tolerances", to_json(r.tolerances)}};
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// "t,x1,...,xn", one row per sample, shortest round-trip decimals.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto n = traj.states.empty() ? 0 : traj.states.front().size();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << (i + 1);
  out << "\n";
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    out << format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) out << "," << format_double(traj.states[k][i]);
    out << "\n";
  }
}

inline void write_residuals_csv(std::ostream& out, const ConjugacyReport& rep) {
  const auto n = rep.per_sample.empty() ? 0 : rep.per_sample.front().x.size();
  for (Eigen::Index i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
  out << "t,conjugacy,roundtrip,foot,time_shift\n";
  for (const auto& s : rep.per_sample) {
    for (Eigen::Index i = 0; i < n; ++i) out << format_double(s.x[i]) << ",";
    out << format_double(s.t) << "," << format_double(s.conjugacy) << "," << format_double(s.roundtrip) << ","
        << format_double(s.foot) << "," << format_double(s.time_shift) << "\n";
  }
}

}  // namespace flowbox::io
