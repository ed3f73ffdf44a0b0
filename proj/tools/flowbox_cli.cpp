// flowbox: build straightening charts, audit them, and export trajectories.
//
// Exit codes: 0 ok, 2 equilibrium, 3 construction failure, 4 input or parse
// error, 5 verification failure.

#include "flowbox.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace flowbox;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitEquilibrium = 2;
constexpr int kExitConstruction = 3;
constexpr int kExitInput = 4;
constexpr int kExitVerification = 5;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::equilibrium:
      return kExitEquilibrium;
    case ErrorKind::construction:
    case ErrorKind::crossing:
    case ErrorKind::contraction:
    case ErrorKind::sampling:
    case ErrorKind::dependent_directions:
      return kExitConstruction;
    default:
      return kExitInput;
  }
}

Point parse_point(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::input, "cannot read '" + item + "' as a coordinate in --point");
    }
  }
  if (values.empty() || text.back() == ',') throw Error(ErrorKind::input, "empty coordinate in --point");
  return Eigen::Map<Point>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("FLOWBOX_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorKind::input, std::string("FLOWBOX_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

std::string fmt(double v) { return io::format_double(v); }

// Chart documents carry the hash of their own contents without the hash field.
std::string chart_hash(json doc) {
  doc.erase("chart_hash");
  return io::document_hash(doc);
}

void write_json(const std::string& path, const json& doc) { io::write_file(path, doc.dump(2) + "\n"); }

struct Common {
  std::optional<std::uint64_t> seed;
  std::uint64_t effective_seed() const { return seed ? *seed : default_seed(); }
};

struct FieldOptions {
  std::string reference;
  std::optional<double> lipschitz;
  std::optional<double> domain_radius;

  io::FieldSpec spec(const Point& base) const {
    io::FieldSpec s;
    s.reference = reference;
    s.declared_lipschitz = lipschitz;
    if (reference.rfind("dsl:", 0) == 0) {
      s.domain_center = base;
      s.domain_radius = domain_radius.value_or(io::kDefaultDslRadius);
    } else if (lipschitz || domain_radius) {
      throw Error(ErrorKind::input, "--lipschitz and --domain-radius apply to DSL fields only");
    }
    return s;
  }

  json to_json() const {
    return {{"reference", reference},
            {"lipschitz", lipschitz ? json(*lipschitz) : json(nullptr)},
            {"domain_radius", domain_radius ? json(*domain_radius) : json(nullptr)}};
  }
};

void add_field_options(CLI::App* cmd, FieldOptions& f) {
  cmd->add_option("--field", f.reference, "builtin:<name> or dsl:<dim>:<expression>")->required();
  cmd->add_option("--lipschitz", f.lipschitz, "declared Lipschitz constant of a DSL field")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--domain-radius", f.domain_radius, "radius of a DSL field's domain ball about --point")
      ->check(CLI::PositiveNumber);
}

VectorField checked_field(const io::FieldSpec& spec, const Point& base) {
  VectorField f = io::resolve_field(spec, base);
  if (f.dimension != base.size()) {
    throw Error(ErrorKind::input, "--point has " + std::to_string(base.size()) + " coordinates but the field has " +
                                      std::to_string(f.dimension));
  }
  return f;
}

// construct ------------------------------------------------------------------

struct ConstructOptions {
  FieldOptions field;
  std::string point;
  std::string out = "chart.json";
  ChartOptions chart;
};

int run_construct(const ConstructOptions& o, const Common& common) {
  const Point base = parse_point(o.point);
  const io::FieldSpec spec = o.field.spec(base);
  const VectorField field = checked_field(spec, base);
  ChartOptions opt = o.chart;
  opt.seed = common.effective_seed();

  const FlowBoxChart chart = build_chart(field, base, opt);
  json config = {{"command", "construct"},
                 {"field", o.field.to_json()},
                 {"point", io::to_json(base)},
                 {"seed", opt.seed},
                 {"samples", opt.samples},
                 {"initial_radius", opt.initial_radius},
                 {"tolerances", io::to_json(opt.tolerances)},
                 {"out", o.out}};
  json doc = io::chart_to_json(chart, spec, config);
  const std::string hash = io::document_hash(doc);
  doc["chart_hash"] = hash;
  write_json(o.out, doc);

  std::cout << "chart for " << spec.reference << " at " << format_point(base) << "\n"
            << "  normalization  " << (chart.normalization.used_swap_map ? "swap map" : "reflection and scaling")
            << "\n"
            << "  r1         = " << fmt(chart.r1) << "\n"
            << "  T          = " << fmt(chart.T) << "\n"
            << "  r2         = " << fmt(chart.r2) << "\n"
            << "  K          = " << fmt(chart.K) << (chart.K_exact ? " (declared)" : " (estimated)") << "\n"
            << "  M          = " << fmt(chart.M) << "\n"
            << "  K_phi      = " << fmt(chart.K_phi) << "\n"
            << "  K_phi_inv  = " << fmt(chart.K_phi_inv) << "\n"
            << "  chart_hash = " << hash << "\n"
            << "wrote " << o.out << "\n";
  return kExitOk;
}

// verify ---------------------------------------------------------------------

struct VerifyOptions {
  std::string chart;
  std::string out = "report.json";
  std::string csv;
  int samples = 500;
  int roundtrip_samples = 1000;
  int pairs = 10000;
  int dependence_pairs = 2000;
  int axiom_samples = 200;
};

int run_verify(const VerifyOptions& o, const Common& common) {
  const io::LoadedChart loaded = io::load_chart(o.chart);
  const FlowBoxChart& chart = loaded.chart;
  const std::uint64_t seed = common.effective_seed();

  const ConjugacyReport conj = verify_conjugacy(chart, o.samples, chart.T / 2.0, seed);
  const RoundtripReport rt = roundtrip_audit(chart, o.roundtrip_samples, seed + 1);
  const LipschitzScanReport scan = lipschitz_ratio_scan(chart, o.pairs, seed + 2);
  DependenceOptions dep_opt;
  dep_opt.K_exact = chart.K_exact;
  const DependenceReport dep = dependence_audit(chart.normalized, chart.K, o.dependence_pairs, chart.T, seed + 3, dep_opt);
  const FlowAxiomsReport axioms = flow_axioms_check(chart.normalized, o.axiom_samples, seed + 4);

  std::vector<std::string> failures;
  if (!conj.passed) failures.push_back("conjugacy: " + conj.diagnostics);
  if (rt.max_residual > 1e-7) failures.push_back("round trip residual " + fmt(rt.max_residual));
  if (scan.violations > 0) failures.push_back(std::to_string(scan.violations) + " Lipschitz bound violations");
  if (dep.violations > 0) failures.push_back(std::to_string(dep.violations) + " continuous dependence violations");
  if (axioms.max_semigroup_residual > 1e-7) failures.push_back("semigroup residual " + fmt(axioms.max_semigroup_residual));

  json config = {{"command", "verify"},
                 {"chart", o.chart},
                 {"seed", seed},
                 {"samples", o.samples},
                 {"roundtrip_samples", o.roundtrip_samples},
                 {"pairs", o.pairs},
                 {"dependence_pairs", o.dependence_pairs},
                 {"axiom_samples", o.axiom_samples},
                 {"out", o.out},
                 {"csv", o.csv}};
  json report = {{"format", "flowbox-report"},
                 {"tool_version", kToolVersion},
                 {"chart_hash", chart_hash(loaded.document)},
                 {"config", config},
                 {"conjugacy", io::to_json(conj)},
                 {"roundtrip", {{"samples", rt.samples}, {"max_residual", rt.max_residual}, {"seed", rt.seed}}},
                 {"lipschitz_scan", io::to_json(scan)},
                 {"dependence", io::to_json(dep)},
                 {"flow_axioms", io::to_json(axioms)},
                 {"passed", failures.empty()},
                 {"failures", failures}};
  write_json(o.out, report);
  if (!o.csv.empty()) {
    std::ostringstream csv;
    io::write_residuals_csv(csv, conj);
    io::write_file(o.csv, csv.str());
  }

  std::cout << "verification of " << o.chart << " (" << chart.field_reference << ")\n"
            << "  conjugacy   max " << fmt(conj.max_conjugacy_residual) << " over " << conj.samples
            << " samples, " << conj.rejected << " rejected\n"
            << "  foot point  max " << fmt(conj.max_foot_invariance_residual) << "\n"
            << "  round trip  max " << fmt(rt.max_residual) << " over " << rt.samples << " samples\n"
            << "  Lipschitz   phi " << fmt(scan.max_ratio_phi) << " <= " << fmt(scan.bound_phi) << ", inverse "
            << fmt(scan.max_ratio_phi_inv) << " <= " << fmt(scan.bound_phi_inv) << ", " << scan.violations
            << " violations" << (scan.K_exact ? "" : " (K estimated)") << "\n"
            << "  dependence  max ratio " << fmt(dep.max_ratio) << ", " << dep.violations << " violations\n"
            << "  semigroup   max " << fmt(axioms.max_semigroup_residual) << "\n";
  for (const auto& f : failures) std::cout << "FAILED: " << f << "\n";
  std::cout << (failures.empty() ? "PASSED" : "FAILED") << ", wrote " << o.out << "\n";
  return failures.empty() ? kExitOk : kExitVerification;
}

// scan-lipschitz -------------------------------------------------------------

struct ScanOptions {
  std::string chart;
  std::string out;
  int pairs = 10000;
};

int run_scan(const ScanOptions& o, const Common& common) {
  const io::LoadedChart loaded = io::load_chart(o.chart);
  const std::uint64_t seed = common.effective_seed();
  const LipschitzScanReport scan = lipschitz_ratio_scan(loaded.chart, o.pairs, seed);
  if (!o.out.empty()) {
    json config = {{"command", "scan-lipschitz"}, {"chart", o.chart}, {"seed", seed}, {"pairs", o.pairs}, {"out", o.out}};
    write_json(o.out, {{"format", "flowbox-report"},
                       {"tool_version", kToolVersion},
                       {"chart_hash", chart_hash(loaded.document)},
                       {"config", config},
                       {"lipschitz_scan", io::to_json(scan)},
                       {"passed", scan.violations == 0}});
  }
  std::cout << "pairs              " << scan.pair_count << "\n"
            << "max ratio phi      " << fmt(scan.max_ratio_phi) << "  bound " << fmt(scan.bound_phi) << "\n"
            << "max ratio phi^-1   " << fmt(scan.max_ratio_phi_inv) << "  bound " << fmt(scan.bound_phi_inv) << "\n"
            << "violations         " << scan.violations << (scan.K_exact ? "" : " (K estimated)") << "\n";
  return scan.violations == 0 ? kExitOk : kExitVerification;
}

// straighten-1d --------------------------------------------------------------

struct StraightenOptions {
  FieldOptions field;
  double from = 0.0;
  double to = 1.0;
  double tolerance = 1e-12;
  std::string out;
};

int run_straighten(const StraightenOptions& o, const Common&) {
  Point base(1);
  base[0] = o.from;
  const io::FieldSpec spec = o.field.spec(base);
  const VectorField field = checked_field(spec, base);
  const double value = straighten_1d(field, o.from, o.to, o.tolerance);
  if (!o.out.empty()) {
    json config = {{"command", "straighten-1d"}, {"field", o.field.to_json()}, {"from", o.from},
                   {"to", o.to},                 {"tolerance", o.tolerance},   {"out", o.out}};
    write_json(o.out, {{"format", "flowbox-report"}, {"tool_version", kToolVersion}, {"config", config},
                       {"phi", value}});
  }
  std::cout << "phi(" << fmt(o.to) << ") = integral of 1/f from " << fmt(o.from) << " = " << fmt(value) << "\n";
  return kExitOk;
}

// export-trajectory ----------------------------------------------------------

struct ExportOptions {
  FieldOptions field;
  std::string point;
  double time = 1.0;
  double tolerance = 1e-9;
  std::string method = "adaptive-rk";
  int iterations = 10;
  int grid = 1001;
  std::string out = "trajectory.csv";
};

int run_export(const ExportOptions& o, const Common& common) {
  const Point base = parse_point(o.point);
  const io::FieldSpec spec = o.field.spec(base);
  const VectorField field = checked_field(spec, base);
  const std::uint64_t seed = common.effective_seed();
  Trajectory traj;
  if (o.method == "picard") {
    traj = picard_solve(field, base, o.time, o.iterations, o.grid, seed).trajectory;
  } else {
    traj = integrate(field, base, o.time, o.tolerance);
  }
  std::ostringstream csv;
  io::write_trajectory_csv(csv, traj);
  io::write_file(o.out, csv.str());
  json config = {{"command", "export-trajectory"},
                 {"field", o.field.to_json()},
                 {"point", io::to_json(base)},
                 {"time", o.time},
                 {"tolerance", o.tolerance},
                 {"method", o.method},
                 {"iterations", o.iterations},
                 {"grid", o.grid},
                 {"seed", seed},
                 {"out", o.out}};
  write_json(o.out + ".json", {{"format", "flowbox-trajectory"},
                               {"tool_version", kToolVersion},
                               {"config", config},
                               {"rows", traj.times.size()},
                               {"exited_domain", traj.exited_domain},
                               {"final_time", traj.final_time()},
                               {"final_state", io::to_json(traj.final_state())}});
  std::cout << "wrote " << traj.times.size() << " rows to " << o.out << " (metadata in " << o.out << ".json)\n";
  if (traj.exited_domain) std::cout << "solution left the domain at t = " << fmt(traj.final_time()) << "\n";
  return kExitOk;
}

// demos ----------------------------------------------------------------------

struct DemoOptions {
  std::string name;
  std::string out;
};

json demo_nondifferentiable(std::ostream& os) {
  const FlowBoxChart chart = build_chart(abs_shear_field(), Point::Zero(2));
  const std::vector<double> steps = {1e-2, 1e-3, 1e-4, 1e-5};
  os << "field f(x, y) = (1 + |y|, 0) at the origin; chart r1 = " << fmt(chart.r1) << "\n"
     << "phi(x, y) = (x / (1 + |y|), y) is Lipschitz but not differentiable across y = 0\n";
  json probes = json::array();
  for (double x : {0.05, 0.0}) {
    Point p(2);
    p << x, 0.0;
    const JacobianJumpReport rep = nonsmoothness_probe(chart, p, 1, steps);
    os << "probe (" << fmt(x) << ", 0), d phi_1 / dy:\n";
    for (std::size_t i = 0; i < steps.size(); ++i) {
      os << "  h = " << fmt(steps[i]) << "  right " << fmt(rep.one_sided_slopes[i].first) << "  left "
         << fmt(rep.one_sided_slopes[i].second) << "\n";
    }
    char rounded[32];
    std::snprintf(rounded, sizeof rounded, "%.6f", rep.estimated_jump);
    os << "  estimated jump " << rounded << " (raw " << fmt(rep.estimated_jump) << ", closed form 2|x| = "
       << fmt(2.0 * std::abs(x)) << ")\n";
    probes.push_back(io::to_json(rep));
  }
  return {{"chart", {{"r1", chart.r1}, {"T", chart.T}, {"r2", chart.r2}}}, {"probes", probes}};
}

json demo_discontinuous(std::ostream& os) {
  os << "field f(x) = 1 for x < 1 and 2 for x >= 1 is not continuous, yet\n"
     << "phi(x) = x for x < 1 and (x + 1)/2 for x >= 1 carries its flow to unit translation\n";
  const double phi2 = step_field_phi(2.0);
  os << "phi(2) = " << fmt(phi2) << "\n";
  double worst = 0.0;
  int checked = 0;
  for (int i = 0; i <= 40; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const double x = -1.0 + 0.1 * i, t = -1.0 + 0.1 * j;
      worst = std::max(worst, std::abs(step_field_phi(step_field_flow(x, t)) - (step_field_phi(x) + t)));
      ++checked;
    }
  }
  os << "max |phi(F(x, t)) - phi(x) - t| over " << checked << " grid points: " << fmt(worst) << "\n";
  const double quad = straighten_1d(step_field(), 0.0, 2.0, 1e-12);
  os << "integral of 1/f from 0 to 2 by quadrature: " << fmt(quad) << "\n";
  return {{"phi_at_2", phi2}, {"grid_points", checked}, {"max_conjugacy_residual", worst}, {"quadrature_phi_at_2", quad}};
}

json demo_straighten(std::ostream& os) {
  const double value = straighten_1d(one_plus_xsq_field(), 0.0, 1.0, 1e-12);
  const double exact = std::numbers::pi / 4.0;
  os << "f(x) = 1 + x^2, phi(x) = integral of 1/f from 0 = arctan(x)\n"
     << "phi(1) = " << fmt(value) << " (pi/4 = " << fmt(exact) << ", difference " << fmt(std::abs(value - exact))
     << ")\n";
  return {{"phi_at_1", value}, {"pi_over_4", exact}};
}

int run_demo(const DemoOptions& o, const Common&) {
  json result;
  if (o.name == "nondifferentiable-transfer") {
    result = demo_nondifferentiable(std::cout);
  } else if (o.name == "discontinuous-1d") {
    result = demo_discontinuous(std::cout);
  } else if (o.name == "straighten-1d") {
    result = demo_straighten(std::cout);
  } else {
    throw Error(ErrorKind::input, "unknown demo '" + o.name +
                                      "' (nondifferentiable-transfer, discontinuous-1d, straighten-1d)");
  }
  if (!o.out.empty()) {
    write_json(o.out, {{"format", "flowbox-demo"},
                       {"tool_version", kToolVersion},
                       {"config", {{"command", "demo"}, {"name", o.name}, {"out", o.out}}},
                       {"result", result}});
  }
  return kExitOk;
}

void add_chart_tolerances(CLI::App* cmd, ChartOptions& opt) {
  cmd->add_option("--integration-tol", opt.tolerances.integration, "integration tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--crossing-tol", opt.tolerances.crossing, "crossing residual tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--samples", opt.samples, "samples for K, M and the radius search")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--initial-radius", opt.initial_radius, "first candidate for r1")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz flow-box charts: construction, audits and demos"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "seed for every sampled quantity (default FLOWBOX_SEED or 0)")
      ->check(CLI::NonNegativeNumber);
  app.fallthrough();

  ConstructOptions construct;
  auto* c = app.add_subcommand("construct", "build a chart at a non-equilibrium point");
  add_field_options(c, construct.field);
  c->add_option("--point", construct.point, "base point, comma separated")->required();
  c->add_option("--out", construct.out, "chart file")->capture_default_str();
  add_chart_tolerances(c, construct.chart);

  VerifyOptions verify;
  auto* v = app.add_subcommand("verify", "audit a chart file");
  v->add_option("--chart", verify.chart, "chart file")->required();
  v->add_option("--out", verify.out, "report file")->capture_default_str();
  v->add_option("--csv", verify.csv, "per-sample conjugacy residuals");
  v->add_option("--samples", verify.samples, "conjugacy samples")->check(CLI::PositiveNumber)->capture_default_str();
  v->add_option("--roundtrip-samples", verify.roundtrip_samples, "round-trip samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--pairs", verify.pairs, "pairs for the Lipschitz scan")->check(CLI::PositiveNumber)->capture_default_str();
  v->add_option("--dependence-pairs", verify.dependence_pairs, "pairs for the continuous dependence audit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  v->add_option("--axiom-samples", verify.axiom_samples, "samples for the flow axioms")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  ScanOptions scan;
  auto* s = app.add_subcommand("scan-lipschitz", "difference quotients of phi and its inverse");
  s->add_option("--chart", scan.chart, "chart file")->required();
  s->add_option("--pairs", scan.pairs, "sampled pairs")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--out", scan.out, "report file");

  DemoOptions demo;
  auto* d = app.add_subcommand("demo", "worked demonstrations");
  d->add_option("name", demo.name, "nondifferentiable-transfer | discontinuous-1d | straighten-1d")->required();
  d->add_option("--out", demo.out, "result file");

  StraightenOptions straighten;
  auto* st = app.add_subcommand("straighten-1d", "phi(x) = integral of 1/f for a scalar field");
  add_field_options(st, straighten.field);
  st->add_option("--from", straighten.from, "base point x1")->capture_default_str();
  st->add_option("--to", straighten.to, "evaluation point x")->capture_default_str();
  st->add_option("--tol", straighten.tolerance, "quadrature tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  st->add_option("--out", straighten.out, "result file");

  ExportOptions exp;
  auto* e = app.add_subcommand("export-trajectory", "solution samples as CSV");
  add_field_options(e, exp.field);
  e->add_option("--point", exp.point, "initial point, comma separated")->required();
  e->add_option("--time", exp.time, "final time (may be negative)")->capture_default_str();
  e->add_option("--tol", exp.tolerance, "integration tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--method", exp.method, "adaptive-rk or picard")
      ->check(CLI::IsMember({"adaptive-rk", "picard"}))
      ->capture_default_str();
  e->add_option("--iterations", exp.iterations, "Picard iterations")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--grid", exp.grid, "Picard grid points")->check(CLI::Range(2, 100000000))->capture_default_str();
  e->add_option("--out", exp.out, "CSV file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*c) return run_construct(construct, common);
    if (*v) return run_verify(verify, common);
    if (*s) return run_scan(scan, common);
    if (*d) return run_demo(demo, common);
    if (*st) return run_straighten(straighten, common);
    if (*e) return run_export(exp, common);
  } catch (const Error& err) {
    std::cerr << "error (" << to_string(err.kind()) << "): " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
