// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance <path to flowbox tool> <path to DSL corpus>

#include "flowbox.hpp"
#include "oracles.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace flowbox;
namespace fs = std::filesystem;

namespace {

constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct NamedChart {
  std::string name;
  FlowBoxChart chart;
};

std::vector<NamedChart> builtin_charts() {
  std::vector<NamedChart> out;
  for (const char* name : {"abs-shear", "exp-shear", "constant-e1"}) {
    out.push_back({name, build_chart(*find_builtin(name), Point::Zero(2))});
  }
  return out;
}

Outcome conjugacy(const std::vector<NamedChart>& charts) {
  Outcome o{true, ""};
  for (const auto& [name, _] : charts) {
    const auto start = std::chrono::steady_clock::now();
    const FlowBoxChart chart = build_chart(*find_builtin(name), Point::Zero(2));
    const ConjugacyReport rep = verify_conjugacy(chart, 500, chart.T / 2.0, 1);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = rep.samples == 500 && rep.max_conjugacy_residual <= 1e-6 && secs < 10.0;
    o.pass = o.pass && ok;
    o.detail += name + " " + num(rep.max_conjugacy_residual) + " in " + num(secs) + " s; ";
  }
  return o;
}

Outcome roundtrip(const std::vector<NamedChart>& charts) {
  Outcome o{true, ""};
  for (const auto& [name, chart] : charts) {
    const RoundtripReport rep = roundtrip_audit(chart, 1000, 2);
    o.pass = o.pass && rep.samples == 1000 && rep.max_residual <= 1e-7;
    o.detail += name + " " + num(rep.max_residual) + "; ";
  }
  return o;
}

Outcome lipschitz(const std::vector<NamedChart>& charts) {
  Outcome o{true, ""};
  for (const auto& [name, chart] : charts) {
    const LipschitzScanReport rep = lipschitz_ratio_scan(chart, 10000, 3);
    const bool exact_bounds = rep.bound_phi == 7.0 * std::exp(chart.K * chart.T) &&
                              rep.bound_phi_inv == 2.0 + 2.0 * std::exp(chart.K * chart.T);
    o.pass = o.pass && chart.K_exact && exact_bounds && rep.pair_count == 10000 && rep.violations == 0;
    o.detail += name + " phi " + num(rep.max_ratio_phi) + "/" + num(rep.bound_phi) + " inv " +
                num(rep.max_ratio_phi_inv) + "/" + num(rep.bound_phi_inv) + " violations " +
                std::to_string(rep.violations) + "; ";
  }
  return o;
}

Outcome crossing(const FlowBoxChart& chart) {
  Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Point x = rng.in_ball(Point::Zero(2), chart.r2);
    const double t = evaluate_phi(chart, x).crossing.t_x;
    worst = std::max(worst, std::abs(t - oracle::abs_shear_crossing_time({x[0], x[1]})));
  }
  return {worst <= 1e-8, "max |t_x - x/(1+|y|)| = " + num(worst) + " over 1000 samples"};
}

Outcome dependence() {
  const DependenceReport rep = dependence_audit(abs_shear_field(), 1.0, 10000, 0.25, 5);
  DependenceOptions sharp;
  sharp.fixed_time = 0.2;
  const DependenceReport lin = dependence_audit(linear_1d_field(), 1.0, 1000, 0.2, 6, sharp);
  const bool ok = rep.evaluated == 10000 && rep.violations == 0 && lin.violations == 0 &&
                  std::abs(lin.max_ratio - 1.0) <= 1e-6 && std::abs(lin.min_ratio - 1.0) <= 1e-6;
  return {ok, "abs-shear violations " + std::to_string(rep.violations) + " of " + std::to_string(rep.evaluated) +
                  ", max ratio " + num(rep.max_ratio) + "; f(x)=x ratio in [" + num(lin.min_ratio) + ", " +
                  num(lin.max_ratio) + "]"};
}

Outcome nonsmooth(const FlowBoxChart& chart) {
  const std::vector<double> steps = {1e-2, 1e-3, 1e-4, 1e-5};
  Point p(2);
  p << 0.05, 0.0;
  const double jump = nonsmoothness_probe(chart, p, 1, steps).estimated_jump;
  const double flat = nonsmoothness_probe(chart, Point::Zero(2), 1, steps).estimated_jump;
  return {std::abs(jump - 0.1) <= 1e-3 && flat <= 1e-6,
          "jump at (0.05, 0) " + num(jump) + ", at (0, 0) " + num(flat)};
}

Outcome straightening() {
  const double q = straighten_1d(one_plus_xsq_field(), 0.0, 1.0, 1e-12);
  const double err = std::abs(q - std::numbers::pi / 4.0);
  const double step = step_field_phi(2.0);
  return {err <= 1e-8 && step == 1.5, "|phi(1) - pi/4| = " + num(err) + ", step field phi(2) = " + num(step)};
}

Outcome picard() {
  Point x0(1);
  x0[0] = 1.0;
  const double three = picard_solve(linear_1d_field(), x0, 0.1, 3, 10001).trajectory.final_state()[0];
  const double ten = picard_solve(linear_1d_field(), x0, 0.1, 10, 10001).trajectory.final_state()[0];
  const double e3 = std::abs(three - oracle::exp_partial_sum(0.1, 3));
  const double e10 = std::abs(ten - std::exp(0.1));
  return {e3 <= 1e-9 && e10 <= 1e-10, "3 iterations off by " + num(e3) + ", 10 iterations off by " + num(e10)};
}

Outcome normalization() {
  Rng rng(9);
  double worst_a = 0.0, worst_b = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 2 + i % 4;
    Point y(n), x(n);
    for (int k = 0; k < n; ++k) {
      y[k] = rng.normal();
      x[k] = rng.normal();
    }
    const Point z = unit_vector(n);
    const NormalizationRecord rec = swap_map_A(y, z);
    const Matrix& A = rec.linear_map;
    // rounding in A scales with its norm; measure in units of eps |A|^2
    const double scale = kMachineEps * std::pow(1.0 + A.norm(), 2);
    worst_a = std::max({worst_a, (A * (A * x) - x).norm() / (scale * (1.0 + x.norm())),
                        (A * y - z).norm() / (scale * (1.0 + y.norm())), (A * z - y).norm() / scale});

    Point f(n);
    for (int k = 0; k < n; ++k) f[k] = 3.0 * rng.normal();
    const NormalizationRecord b = normalize(constant_field(f, "c"), Point::Zero(n)).record;
    const double cond = spectral_norm(b.linear_map) * spectral_norm(b.linear_map_inverse);
    const Matrix round = b.linear_map * b.linear_map_inverse - Matrix::Identity(n, n);
    worst_b = std::max({worst_b, (b.linear_map * f - z).norm() / (kMachineEps * cond),
                        round.norm() / (kMachineEps * cond)});
  }
  // a few units of rounding, scaled as above
  const bool ok = worst_a <= 16.0 && worst_b <= 16.0;
  return {ok, "swap map residual " + num(worst_a) + " and B f(x1) - e1, B B^-1 - I residual " + num(worst_b) +
                  " (units of scaled machine epsilon)"};
}

Outcome radii(const std::vector<NamedChart>& charts) {
  Outcome o{true, ""};
  std::vector<NamedChart> all = charts;
  Point one(1);
  one[0] = 0.5;
  all.push_back({"one-plus-xsq", build_chart(one_plus_xsq_field(), one)});
  Point off(2);
  off << 0.3, -0.2;
  all.push_back({"exp-shear@(0.3,-0.2)", build_chart(exp_shear_field(), off)});
  for (const auto& [name, c] : all) {
    o.pass = o.pass && c.T == c.r1 / 4.0 && c.r2 == std::min(c.r1 / 10.0, c.T / 2.0);
  }
  const double r1 = charts.front().chart.r1;
  o.pass = o.pass && r1 >= 0.9 && r1 <= 1.0;
  o.detail = "formulas exact on " + std::to_string(all.size()) + " charts, abs-shear r1 = " + num(r1);
  return o;
}

Outcome interior(const std::vector<NamedChart>& charts) {
  int failures = 0, checks = 0;
  Rng rng(11);
  for (const auto& [name, chart] : charts) {
    for (int i = 0; i < 20; ++i) {
      const Point x = rng.in_ball(Point::Zero(2), chart.r2);
      const double s4 = certified_interior_radius(chart, x);
      const Point center = phi(chart, x);
      for (int j = 0; j < 100; ++j) {
        const Point u = rng.in_ball(center, s4);
        ++checks;
        try {
          if (!chart.in_w1(phi_inverse(chart, u))) ++failures;
        } catch (const Error&) {
          ++failures;
        }
      }
    }
  }
  return {failures == 0, std::to_string(failures) + " failures in " + std::to_string(checks) + " checks"};
}

Outcome axioms() {
  Outcome o{true, ""};
  for (const char* name : {"abs-shear", "exp-shear", "constant-e1", "one-plus-xsq", "linear-1d"}) {
    const FlowAxiomsReport rep = flow_axioms_check(*find_builtin(name), 200, 12, 1e-10);
    o.pass = o.pass && rep.max_identity_residual == 0.0 && rep.max_semigroup_residual <= 1e-7;
    o.detail += std::string(name) + " " + num(rep.max_semigroup_residual) + "; ";
  }
  return o;
}

Outcome dsl_checks(const std::string& corpus_path) {
  std::ifstream in(corpus_path);
  std::string line;
  int cases = 0, stable = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    ++cases;
    const auto bar = line.find('|');
    const int dim = std::stoi(line.substr(0, bar));
    try {
      const dsl::FieldExpr a = dsl::parse_field(line.substr(bar + 1), dim);
      const dsl::FieldExpr b = dsl::parse_field(dsl::print(a), dim);
      if (dsl::same_structure(a, b) && dsl::print(b) == dsl::print(a)) ++stable;
    } catch (const Error&) {
    }
  }
  const std::vector<std::pair<std::string, std::string>> rebuilds = {
      {"abs-shear", "(1+abs(y), 0)"}, {"exp-shear", "(1, y)"},       {"constant-e1", "(1, 0)"},
      {"one-plus-xsq", "1+x^2"},      {"step-field", "ifge(x-1, 2, 1)"}, {"linear-1d", "x"}};
  double worst = 0.0;
  Rng rng(13);
  for (const auto& [name, src] : rebuilds) {
    const VectorField b = *find_builtin(name);
    const VectorField d = dsl::make_field(src, b.dimension, b.domain_center, b.domain_radius);
    for (int i = 0; i < 1000; ++i) {
      const Point x = rng.in_ball(b.domain_center, b.domain_radius);
      worst = std::max(worst, (b.evaluate(x) - d.evaluate(x)).norm());
    }
  }
  return {cases == 50 && stable == 50 && worst <= 1e-12,
          std::to_string(stable) + "/" + std::to_string(cases) + " corpus cases stable, rebuild difference " +
              num(worst)};
}

int run_tool(const std::string& tool, const std::string& args) {
  const std::string cmd = "'" + tool + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility(const std::string& tool) {
  const fs::path dir = fs::temp_directory_path() / ("flowbox_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string chart = (dir / "chart.json").string(), report = (dir / "report.json").string();
  std::string charts[2], reports[2];
  bool ran = true;
  for (int i = 0; i < 2; ++i) {
    ran = ran && run_tool(tool, "--seed 42 construct --field builtin:abs-shear --point 0.01,0.02 --out " + chart) == 0;
    ran = ran && run_tool(tool, "--seed 42 verify --chart " + chart + " --out " + report) == 0;
    charts[i] = slurp(chart);
    reports[i] = slurp(report);
    fs::remove(chart);
    fs::remove(report);
  }
  fs::remove_all(dir);
  const bool same = ran && !charts[0].empty() && charts[0] == charts[1] && reports[0] == reports[1];
  return {same, std::string(ran ? "both runs exited 0" : "a run failed") + ", chart " +
                    (charts[0] == charts[1] ? "identical" : "differs") + ", report " +
                    (reports[0] == reports[1] ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: acceptance <flowbox tool> <dsl corpus>\n";
    return 2;
  }
  const std::string tool = argv[1], corpus = argv[2];

  const std::vector<NamedChart> charts = builtin_charts();
  const FlowBoxChart& abs_chart = charts.front().chart;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"conjugacy residual <= 1e-6 on three charts", [&] { return conjugacy(charts); }},
      {"round trip <= 1e-7", [&] { return roundtrip(charts); }},
      {"Lipschitz bounds of phi and its inverse", [&] { return lipschitz(charts); }},
      {"crossing time matches x/(1+|y|)", [&] { return crossing(abs_chart); }},
      {"continuous dependence bound", [] { return dependence(); }},
      {"derivative jump across y = 0", [&] { return nonsmooth(abs_chart); }},
      {"one-dimensional straightening", [] { return straightening(); }},
      {"Picard iterates", [] { return picard(); }},
      {"normalization algebra", [] { return normalization(); }},
      {"radii formulas", [&] { return radii(charts); }},
      {"certified interior radius", [&] { return interior(charts); }},
      {"flow axioms", [] { return axioms(); }},
      {"DSL round trip and builtin rebuilds", [&] { return dsl_checks(corpus); }},
      {"bit-identical CLI artifacts", [&] { return reproducibility(tool); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << ": " << criteria[i].first << " ("
              << o.detail << ")" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
