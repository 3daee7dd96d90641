#include "homog/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "toml.hpp"

#include "homog/diagnostics.hpp"
#include "homog/error.hpp"

namespace homog::cli {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (auto&& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (auto&& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("dates and times are not valid configuration values");
}

/// Typed access to one table; remembers which keys were read so that
/// leftovers can be rejected.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      node_ = &root.at(name_);
      if (!node_->is_object()) throw ConfigError("[" + name_ + "] must be a table");
    }
  }

  const json* get(const std::string& key) {
    used_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  double number(const std::string& key, double def) {
    const auto* v = get(key);
    if (!v) return def;
    return as_number(*v, key);
  }

  int integer(const std::string& key, int def) {
    const auto* v = get(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(key, "an integer");
    return v->get<int>();
  }

  bool boolean(const std::string& key, bool def) {
    const auto* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(key, "a boolean");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const auto* v = get(key);
    if (!v) return def;
    if (!v->is_string()) fail(key, "a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    const auto* v = get(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "an array of numbers");
    std::vector<double> out;
    for (const auto& x : *v) out.push_back(as_number(x, key));
    return out;
  }

  Vec2 vec2(const std::string& key, Vec2 def) {
    const auto* v = get(key);
    if (!v) return def;
    return as_vec2(*v, key);
  }

  Mat2 matrix(const std::string& key, Mat2 def) {
    const auto* v = get(key);
    if (!v) return def;
    return as_matrix(*v, key);
  }

  std::vector<Mat2> matrices(const std::string& key, std::vector<Mat2> def) {
    const auto* v = get(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "an array");
    std::vector<Mat2> out;
    for (const auto& x : *v) out.push_back(as_matrix(x, key));
    return out;
  }

  std::vector<Vec2> vecs(const std::string& key, std::vector<Vec2> def) {
    const auto* v = get(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "an array");
    std::vector<Vec2> out;
    for (const auto& x : *v) out.push_back(as_vec2(x, key));
    return out;
  }

  void finish(const std::string& hint = "") const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!used_.count(k)) throw ConfigError("unknown key '" + k + "' in [" + name_ + "]" + hint);
  }

 private:
  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError("[" + name_ + "] " + key + " must be " + what);
  }
  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) fail(key, "a number");
    return v.get<double>();
  }
  Vec2 as_vec2(const json& v, const std::string& key) const {
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (!v.is_array() || v.empty() || v.size() > 2) fail(key, "a number or a 1- or 2-vector");
    return {as_number(v[0], key), v.size() == 2 ? as_number(v[1], key) : 0.0};
  }
  /// Scalar (times identity), [a, b] (diagonal) or [[a11, a12], [a21, a22]].
  Mat2 as_matrix(const json& v, const std::string& key) const {
    if (v.is_number()) return Mat2::scalar(v.get<double>());
    if (!v.is_array() || v.size() != 2) fail(key, "a scalar, a diagonal pair or a 2x2 matrix");
    if (v[0].is_number() && v[1].is_number()) return Mat2::diag(v[0].get<double>(), v[1].get<double>());
    Mat2 m;
    for (int i = 0; i < 2; ++i) {
      if (!v[i].is_array() || v[i].size() != 2) fail(key, "a 2x2 matrix");
      for (int j = 0; j < 2; ++j) m(i, j) = as_number(v[i][j], key);
    }
    return m;
  }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> used_;
};

FieldKind parse_field_kind(const std::string& s) {
  for (auto k : {FieldKind::constant, FieldKind::periodic, FieldKind::checkerboard, FieldKind::laminate})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown field kind '" + s + "'");
}

FieldSpec parse_field(const json& root) {
  Section s(root, "field");
  FieldSpec f;
  f.kind = parse_field_kind(s.string("kind", "constant"));
  f.dim = s.integer("dim", 1);
  f.bounds.lambda = s.number("lambda", f.bounds.lambda);
  f.bounds.Lambda = s.number("Lambda", f.bounds.Lambda);
  f.enforce_bounds = s.boolean("enforce_bounds", true);
  switch (f.kind) {
    case FieldKind::constant:
      f.a0 = s.matrix("a", f.a0);
      f.b0 = s.vec2("b", f.b0);
      f.d0 = s.number("d", f.d0);
      break;
    case FieldKind::periodic: {
      auto& p = f.periodic;
      p.a0 = s.matrix("a0", p.a0);
      p.alpha = s.number("alpha", p.alpha);
      p.M = s.matrix("M", p.M);
      p.b0 = s.vec2("b0", p.b0);
      p.b_amp = s.number("b_amp", p.b_amp);
      p.d0 = s.number("d0", p.d0);
      p.d_amp = s.number("d_amp", p.d_amp);
      break;
    }
    case FieldKind::checkerboard: {
      auto& p = f.checkerboard;
      p.a_values = s.matrices("a_values", p.a_values);
      p.b_values = s.vecs("b_values", p.b_values);
      p.d_values = s.numbers("d_values", p.d_values);
      p.time_dependent = s.boolean("time_dependent", p.time_dependent);
      f.torus_cells = s.integer("torus_cells", f.torus_cells);
      break;
    }
    case FieldKind::laminate: {
      auto& p = f.laminate;
      p.a_values = s.matrices("a_values", p.a_values);
      p.b = s.vec2("b", p.b);
      p.d = s.number("d", p.d);
      break;
    }
  }
  s.finish(std::string(" for field kind ") + to_string(f.kind));
  return f;
}

Profile parse_profile(const json& root, const std::string& name) {
  Section s(root, name);
  Profile p;
  const auto kind = s.string("kind", "zero");
  if (kind == "zero") {
    p.kind = Profile::Kind::zero;
  } else if (kind == "affine") {
    p.kind = Profile::Kind::affine;
    p.offset = s.number("offset", p.offset);
    p.gradient = s.vec2("gradient", p.gradient);
    p.time_slope = s.number("time_slope", p.time_slope);
  } else if (kind == "gaussian_bump") {
    p.kind = Profile::Kind::gaussian_bump;
    p.offset = s.number("offset", p.offset);
    p.amplitude = s.number("amplitude", p.amplitude);
    p.center = s.vec2("center", p.center);
    p.width = s.number("width", p.width);
    if (!(p.width > 0.0)) throw ConfigError("[" + name + "] width must be positive");
  } else if (kind == "sine_sheet") {
    p.kind = Profile::Kind::sine_sheet;
    p.offset = s.number("offset", p.offset);
    p.amplitude = s.number("amplitude", p.amplitude);
    p.wavenumber = s.number("wavenumber", p.wavenumber);
    p.decay = s.number("decay", p.decay);
  } else {
    throw ConfigError("unknown profile kind '" + kind + "' in [" + name + "]");
  }
  s.finish(" for profile kind " + kind);
  return p;
}

// ---------------------------------------------------------------- output helpers

json mat_json(const Mat2& m, int dim) {
  if (dim == 1) return json::array({json::array({m(0, 0)})});
  return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})});
}

json vec_json(const Vec2& v, int dim) { return dim == 1 ? json::array({v[0]}) : json::array({v[0], v[1]}); }

json coefficients_json(const HomogenizedCoefficients& c) {
  return {{"dim", c.dim},
          {"a_bar", mat_json(c.a_bar, c.dim)},
          {"b_bar", vec_json(c.b_bar, c.dim)},
          {"d_bar", c.d_bar},
          {"a_stderr", mat_json(c.a_stderr, c.dim)},
          {"b_stderr", vec_json(c.b_stderr, c.dim)},
          {"d_stderr", c.d_stderr},
          {"samples", c.samples}};
}

json fit_json(const std::optional<RateFit>& f) {
  if (!f) return nullptr;
  return {{"slope", f->slope}, {"intercept", f->intercept}, {"r2", f->r2}};
}

json quartiles_json(const Quartiles& q) { return {{"median", q.median}, {"q1", q.q1}, {"q3", q.q3}}; }

json report_json(const InequalityReport& r, int sample) {
  json comps = json::object();
  for (const auto& [k, v] : r.rhs_components) comps[k] = v;
  json out = {{"probe", r.probe},
              {"sample", sample},
              {"seed", r.context.seed},
              {"r", r.context.r},
              {"center", json::array({r.context.center[0], r.context.center[1]})},
              {"t_top", r.context.t_top},
              {"field", r.context.field},
              {"lhs", r.lhs},
              {"rhs_components", comps},
              {"rhs", r.rhs},
              {"implied_constant", r.implied_constant},
              {"input_residual", r.input_residual}};
  if (r.probe == "caccioppoli_interior") {
    out["sup_lhs"] = r.sup_lhs;
    out["sup_rhs"] = r.sup_rhs;
    out["sup_implied"] = r.sup_implied;
  }
  return out;
}

std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

/// Runs body(k) for k < n on up to `jobs` threads; rethrows the first failure by index.
template <class Body>
void parallel_samples(int n, int jobs, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- commands

CauchyDirichletProblem make_problem(const RunConfig& cfg, const CoefficientField& field, const SpaceTimeGrid& g,
                                    double shift, bool zero_boundary = false) {
  CauchyDirichletProblem pr;
  pr.coefficients = coefficients_of(rescale(field, cfg.grid.epsilon));
  pr.grid = g;
  if (!zero_boundary) pr.boundary = cfg.study.boundary.source(field.dim());
  pr.source = cfg.study.source.source(field.dim());
  pr.lambda_shift = shift;
  pr.tol = cfg.study.tol;
  return pr;
}

Result cmd_validate(const RunConfig& cfg) {
  FieldSpec spec = cfg.study.field;
  spec.enforce_bounds = false;
  const auto field = spec.build(cfg.study.seed);
  const auto rep = validate(field, static_cast<std::size_t>(cfg.validate_samples), cfg.study.seed);
  Result r;
  r.name = "validate";
  r.json = {{"field", field.describe()},
            {"samples", rep.samples},
            {"rayleigh_min", rep.rayleigh_min},
            {"rayleigh_max", rep.rayleigh_max},
            {"asymmetry_max", rep.asymmetry_max},
            {"b_norm2_max", rep.b_norm2_max},
            {"d_max", rep.d_max},
            {"d2_max", rep.d2_max},
            {"lambda", field.lambda()},
            {"Lambda", field.Lambda()},
            {"violations", rep.violations},
            {"ok", rep.ok()}};
  r.table.columns = {{"quantity", "checked bound"}, {"value", "extreme sampled value"}, {"limit", "allowed bound"}};
  r.table.rows = {{std::string("rayleigh_min"), rep.rayleigh_min, 1.0},
                  {std::string("rayleigh_max"), rep.rayleigh_max, field.lambda()},
                  {std::string("asymmetry_max"), rep.asymmetry_max, 0.0},
                  {std::string("b_norm2_max"), rep.b_norm2_max, field.Lambda()},
                  {std::string("d_max"), rep.d_max, 0.0},
                  {std::string("d2_max"), rep.d2_max, field.Lambda()}};
  if (!rep.ok()) {
    std::string all;
    for (const auto& v : rep.violations) all += (all.empty() ? "" : ", ") + v;
    throw ConstraintError(rep.violations.front(), "field violates: " + all);
  }
  return r;
}

Result cmd_homogenize(const RunConfig& cfg) {
  const auto& st = cfg.study;
  HomogenizedCoefficients hc;
  json extra = json::object();
  if (st.field.random()) {
    RveSpec rs;
    rs.params = st.field.checkerboard;
    rs.params.dim = st.field.dim;
    rs.params.bounds = st.field.bounds;
    rs.params.enforce_bounds = st.field.enforce_bounds;
    rs.L = cfg.rve_L;
    rs.n_samples = cfg.rve_samples;
    rs.base_seed = st.seed;
    rs.cell_nx = st.cell_nx;
    rs.cell_nt = st.cell_nt;
    rs.options = st.cell_options;
    hc = rve_estimate(rs).mean;
    extra = {{"L", rs.L}, {"rve_samples", rs.n_samples}};
  } else {
    hc = periodic_coefficients(st.field.build(st.seed), st.cell_nx, st.cell_nt, st.cell_options);
  }
  Result r;
  r.name = "homogenize";
  r.json = {{"coefficients", coefficients_json(hc)}, {"rve", extra}, {"cell_nx", st.cell_nx}, {"cell_nt", st.cell_nt}};
  r.table.columns = {{"quantity", "coefficient entry"}, {"value", "estimate"}, {"stderr", "Monte-Carlo standard error"}};
  for (int i = 0; i < hc.dim; ++i)
    for (int j = 0; j < hc.dim; ++j)
      r.table.rows.push_back({"a" + std::to_string(i + 1) + std::to_string(j + 1), hc.a_bar(i, j), hc.a_stderr(i, j)});
  for (int i = 0; i < hc.dim; ++i)
    r.table.rows.push_back({"b" + std::to_string(i + 1), hc.b_bar[static_cast<std::size_t>(i)],
                            hc.b_stderr[static_cast<std::size_t>(i)]});
  r.table.rows.push_back({std::string("d"), hc.d_bar, hc.d_stderr});
  return r;
}

Result cmd_corrector(const RunConfig& cfg) {
  const auto& st = cfg.study;
  const auto field = st.field.build(st.seed);
  const auto sp = field.spatial_period();
  const int L = sp ? std::max(1, static_cast<int>(std::lround(*sp))) : 1;
  Result r;
  r.name = "corrector";
  r.table.columns = {{"direction", "unit direction index"}, {"level", "stored time level"},
                     {"s", "cell time"},                    {"i", "node index along y1"},
                     {"j", "node index along y2"},          {"phi", "corrector value"}};
  json dirs = json::array();
  for (int d = 0; d < field.dim(); ++d) {
    CellProblem p;
    p.field = field;
    p.direction = d == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    p.cell_nx = st.cell_nx;
    p.cell_nt = st.cell_nt;
    p.period_L = L;
    const auto c = solve_cell_problem(p, st.cell_options);
    const auto diag = corrector_diagnostics(c, {1.0, 2.0, 4.0, 8.0});
    dirs.push_back({{"direction", d},
                    {"n", c.n},
                    {"nt", c.nt},
                    {"period", c.period},
                    {"period_L", c.period_L},
                    {"steady", c.steady},
                    {"residual", c.residual},
                    {"periods", c.periods},
                    {"balance_residual", c.balance_residual},
                    {"mean", c.mean},
                    {"max_abs", c.max_abs()},
                    {"mean_square", c.mean_square()},
                    {"sublinearity", {{"radii", diag.radii}, {"values", diag.sublinearity}, {"slope", diag.slope}}}});
    const auto nodes = c.num_nodes();
    for (int lv = 0; lv < c.nt; ++lv)
      for (std::size_t k = 0; k < nodes; ++k) {
        const long long i = static_cast<long long>(k % static_cast<std::size_t>(c.n));
        const long long j = static_cast<long long>(k / static_cast<std::size_t>(c.n));
        r.table.rows.push_back({static_cast<long long>(d), static_cast<long long>(lv), lv * c.period / c.nt, i, j,
                                c.at(lv, k)});
      }
  }
  r.json = {{"field", field.describe()}, {"directions", dirs}};
  return r;
}

Result cmd_solve(const RunConfig& cfg) {
  const auto field = cfg.study.field.build(cfg.study.seed);
  const auto g = explicit_grid(cfg, cfg.store_stride);
  auto pr = make_problem(cfg, field, g, cfg.shift);
  pr.store_stride = cfg.store_stride;
  const auto res = solve_problem(pr);
  const auto& p = res.solution;
  const auto& sg = p.grid();
  Result r;
  r.name = "solve";
  long long iters = 0;
  for (int it : res.iterations) iters += it;
  double max_abs = 0.0;
  for (double v : p.values()) max_abs = std::max(max_abs, std::abs(v));
  const auto last = p.level(sg.nt() - 1);
  r.json = {{"field", field.describe()},
            {"epsilon", cfg.grid.epsilon},
            {"grid", {{"nx", g.nx()}, {"nt", g.nt()}, {"h", g.h()}, {"dt", g.dt()}, {"store_stride", cfg.store_stride}}},
            {"lambda_shift", cfg.shift},
            {"max_residual", res.max_residual},
            {"iterations", iters},
            {"l2_norm", lp_norm(p, 2.0)},
            {"max_abs", max_abs},
            {"final_level", std::vector<double>(last.begin(), last.end())}};
  r.table.columns = {{"level", "stored level index"}, {"t", "time"}, {"i", "node index along x1"},
                     {"j", "node index along x2"},    {"p", "solution value"}};
  for (int n = 0; n < sg.nt(); ++n)
    for (std::size_t k = 0; k < sg.num_nodes(); ++k) {
      const auto ij = sg.index(k);
      r.table.rows.push_back({static_cast<long long>(n), sg.t(n), static_cast<long long>(ij[0]),
                              static_cast<long long>(ij[1]), p.at(n, k)});
    }
  return r;
}

const std::vector<std::pair<std::string, std::string>> kErrorColumns = {
    {"epsilon", "scale"},
    {"phi_l2", "eps ||phi||_L2"},
    {"grad_phi", "||grad phi||_dual"},
    {"flux", "||a(e + grad phi) - a_bar e||_dual"},
    {"b_term", "||b.(e + grad phi) - b_bar.e||_dual"},
    {"d_term", "||d - d_bar||_dual"},
    {"total", "sum of the five terms"}};

std::vector<Cell> error_row(const ErrorFunctional& e) {
  return {e.epsilon, e.terms[0], e.terms[1], e.terms[2], e.terms[3], e.terms[4], e.total};
}

json error_json(const ErrorFunctional& e) {
  return {{"epsilon", e.epsilon},
          {"terms", std::vector<double>(e.terms.begin(), e.terms.end())},
          {"total", e.total},
          {"fine_cells", e.fine_cells},
          {"fine_levels", e.fine_levels},
          {"space_stride", e.coarsening.space_stride},
          {"time_stride", e.coarsening.time_stride}};
}

Result cmd_error_functional(const RunConfig& cfg) {
  const auto& st = cfg.study;
  const auto field = st.field.build(st.seed);
  std::vector<CorrectorSolution> correctors;
  const auto hc = periodic_coefficients(field, st.cell_nx, st.cell_nt, st.cell_options, &correctors);
  const auto& eps = cfg.ef_epsilons.empty() ? st.epsilons : cfg.ef_epsilons;
  std::vector<ErrorFunctional> out(eps.size());
  parallel_samples(static_cast<int>(eps.size()), st.jobs, [&](int i) {
    out[static_cast<std::size_t>(i)] =
        error_functional(field, correctors, eps[static_cast<std::size_t>(i)], st.error_options);
  });
  Result r;
  r.name = "error_functional";
  r.table.columns = kErrorColumns;
  json rows = json::array();
  for (const auto& e : out) {
    r.table.rows.push_back(error_row(e));
    rows.push_back(error_json(e));
  }
  r.json = {{"field", field.describe()}, {"coefficients", coefficients_json(hc)}, {"rows", rows}};
  return r;
}

json study_json(const ConvergenceReport& rep) {
  json rows = json::array();
  for (const auto& row : rep.rows) {
    json th_rows = json::array();
    for (const auto& t : row.rate_bound.rows) th_rows.push_back({{"r", t.r}, {"shape", t.shape}, {"implied", t.implied}});
    rows.push_back({{"epsilon", row.epsilon},
                    {"l2_error", row.l2_error},
                    {"dual_grad_error", row.dual_grad_error},
                    {"l2_norm", row.l2_norm},
                    {"E", error_json(row.error)},
                    {"transform_residual", row.transform_residual},
                    {"transform_bound", row.transform_bound},
                    {"rate_bound",
                     {{"beta", row.rate_bound.beta},
                      {"lhs_l2", row.rate_bound.lhs_l2},
                      {"lhs_dual", row.rate_bound.lhs_dual},
                      {"lhs", row.rate_bound.lhs},
                      {"rows", th_rows},
                      {"min_implied", row.rate_bound.min_implied},
                      {"e_underestimated", row.rate_bound.e_underestimated}}},
                    {"runtime", row.runtime}});
  }
  return {{"field", rep.field},
          {"seed", rep.seed},
          {"coefficients", coefficients_json(rep.coefficients)},
          {"Lambda", rep.Lambda},
          {"h", rep.h},
          {"dt", rep.dt},
          {"store_stride", rep.store_stride},
          {"f_norm", rep.f_norm},
          {"rows", rows},
          {"l2_rate", fit_json(rep.l2_rate)},
          {"dual_rate", fit_json(rep.dual_rate)},
          {"E_rate", fit_json(rep.e_rate)},
          {"rate_bound_spread", rep.rate_bound_sweep.spread},
          {"rate_bound_bounded", rep.rate_bound_sweep.bounded},
          {"transform_ok", rep.transform_ok}};
}

Result cmd_converge(const RunConfig& cfg) {
  Result r;
  r.name = "converge";
  if (cfg.samples <= 1) {
    r.table.columns = {{"epsilon", "scale"},
                       {"l2_error", "||p_eps - p0||_L2(V)"},
                       {"dual_grad_error", "||grad p_eps - grad p0||_dual"},
                       {"E_total", "error functional E(eps)"},
                       {"runtime", "seconds; 0 unless --timing"}};
    if (cfg.study.epsilons.empty()) {
      r.json = {{"rows", json::array()}};
      return r;
    }
    const auto rep = run_convergence_study(cfg.study);
    for (const auto& row : rep.rows)
      r.table.rows.push_back({row.epsilon, row.l2_error, row.dual_grad_error, row.error.total, row.runtime});
    r.json = study_json(rep);
    return r;
  }
  r.table.columns = {{"epsilon", "scale"},
                     {"l2_median", "median ||p_eps - p0||_L2(V)"},
                     {"l2_iqr", "interquartile range"},
                     {"dual_median", "median dual gradient error"},
                     {"dual_iqr", "interquartile range"},
                     {"E_median", "median E(eps)"},
                     {"E_iqr", "interquartile range"}};
  if (cfg.study.epsilons.empty()) {
    r.json = {{"rows", json::array()}};
    return r;
  }
  const auto rep = monte_carlo_ensemble(cfg.study, cfg.samples);
  json rows = json::array(), samples = json::array(), failures = json::array();
  for (const auto& row : rep.rows) {
    r.table.rows.push_back({row.epsilon, row.l2_error.median, row.l2_error.iqr(), row.dual_grad_error.median,
                            row.dual_grad_error.iqr(), row.e_total.median, row.e_total.iqr()});
    rows.push_back({{"epsilon", row.epsilon},
                    {"l2_error", quartiles_json(row.l2_error)},
                    {"dual_grad_error", quartiles_json(row.dual_grad_error)},
                    {"E_total", quartiles_json(row.e_total)}});
  }
  for (std::size_t k = 0; k < rep.samples.size(); ++k) {
    auto s = study_json(rep.samples[k]);
    s["sample"] = rep.sample_index[k];
    samples.push_back(std::move(s));
  }
  for (const auto& f : rep.failures)
    failures.push_back({{"sample", f.sample}, {"seed", f.seed}, {"kind", f.kind}, {"message", f.message}});
  r.json = {{"base_seed", rep.base_seed},
            {"n_samples", rep.n_samples},
            {"rows", rows},
            {"samples", samples},
            {"failures", failures},
            {"failure_count", rep.failures.size()}};
  return r;
}

Result cmd_caccioppoli(const RunConfig& cfg) {
  const auto& st = cfg.study;
  const auto& dg = cfg.diagnose;
  const auto g = explicit_grid(cfg);
  const double t_top = dg.t_top.value_or(g.time().hi);
  const int n = std::max(1, dg.samples);
  std::vector<std::vector<InequalityReport>> interior(static_cast<std::size_t>(n)), global(static_cast<std::size_t>(n));
  parallel_samples(n, st.jobs, [&](int k) {
    const auto seed = derive_seed(st.seed, static_cast<std::uint64_t>(k));
    const auto field = st.field.build(seed);
    const double shift = field.Lambda();
    const auto pr = make_problem(cfg, field, g, shift);
    const auto p = solve_problem(pr).solution;
    auto& in = interior[static_cast<std::size_t>(k)];
    for (double r : dg.radii) in.push_back(caccioppoli_interior(pr, p, r, dg.center, t_top, seed));
    if (dg.energy) {
      const auto pz = make_problem(cfg, field, g, shift, true);
      const auto v = solve_problem(pz).solution;
      auto& gl = global[static_cast<std::size_t>(k)];
      gl.push_back(global_energy_estimate(pz, v, seed));
      for (double r : dg.radii) gl.push_back(caccioppoli_global(pz, v, r, dg.center, t_top, seed));
    }
  });

  Result res;
  res.name = "caccioppoli";
  res.table.columns = {{"probe", "inequality"},       {"sample", "ensemble index"}, {"seed", "field seed"},
                       {"r", "radius (0: whole V)"}, {"lhs", "left side"},         {"rhs", "sum of right-side terms"},
                       {"implied", "lhs / rhs"},      {"residual", "input PDE residual"}};
  json reports = json::array();
  std::vector<InequalityReport> all_interior, all_energy;
  for (int k = 0; k < n; ++k)
    for (const auto* list : {&interior[static_cast<std::size_t>(k)], &global[static_cast<std::size_t>(k)]})
      for (const auto& rep : *list) {
        res.table.rows.push_back({rep.probe, static_cast<long long>(k), std::to_string(rep.context.seed),
                                  rep.context.r, rep.lhs, rep.rhs, rep.implied_constant, rep.input_residual});
        reports.push_back(report_json(rep, k));
        if (rep.probe == "caccioppoli_interior") all_interior.push_back(rep);
        if (rep.probe == "global_energy") all_energy.push_back(rep);
      }
  res.json = {{"reports", reports},
              {"interior_spread", implied_spread(all_interior)},
              {"energy_spread", all_energy.empty() ? json(nullptr) : json(implied_spread(all_energy))},
              {"grid", {{"nx", g.nx()}, {"nt", g.nt()}, {"dt", g.dt()}}},
              {"epsilon", cfg.grid.epsilon}};
  return res;
}

Result cmd_meyers(const RunConfig& cfg) {
  const auto& st = cfg.study;
  const auto& dg = cfg.diagnose;
  const int n = std::max(1, dg.samples);
  const int passes = dg.refine ? 2 : 1;
  std::vector<std::vector<MeyersReport>> reps(static_cast<std::size_t>(passes),
                                              std::vector<MeyersReport>(static_cast<std::size_t>(n)));
  std::vector<int> nx(static_cast<std::size_t>(passes));
  for (int pass = 0; pass < passes; ++pass) {
    const int nxp = pass == 0 ? cfg.grid.nx : 2 * (cfg.grid.nx - 1) + 1;
    nx[static_cast<std::size_t>(pass)] = nxp;
    const auto g = explicit_grid(cfg, 1, nxp);
    parallel_samples(n, st.jobs, [&](int k) {
      const auto seed = derive_seed(st.seed, static_cast<std::uint64_t>(k));
      const auto field = st.field.build(seed);
      const auto pr = make_problem(cfg, field, g, field.Lambda());
      reps[static_cast<std::size_t>(pass)][static_cast<std::size_t>(k)] =
          meyers_probe(pr, solve_problem(pr).solution, dg.deltas, seed);
    });
  }

  Result res;
  res.name = "meyers";
  res.table.columns = {{"nx", "nodes per axis"},
                       {"sample", "ensemble index"},
                       {"seed", "field seed"},
                       {"delta", "integrability gain (0: baseline)"},
                       {"grad_norm", "||grad p||_L^(2+delta)(V)"},
                       {"f_norm", "||f||_W^(1,2+delta)_par(V)"},
                       {"h_norm", "2-based dual surrogate of h"},
                       {"implied", "grad_norm / (f_norm + h_norm)"},
                       {"finite", "1 when grad_norm is finite"}};
  json samples = json::array();
  for (int pass = 0; pass < passes; ++pass)
    for (int k = 0; k < n; ++k) {
      const auto& rep = reps[static_cast<std::size_t>(pass)][static_cast<std::size_t>(k)];
      json rows = json::array();
      for (const auto& row : rep.rows) {
        res.table.rows.push_back({static_cast<long long>(nx[static_cast<std::size_t>(pass)]), static_cast<long long>(k),
                                  std::to_string(rep.seed), row.delta, row.grad_norm, row.f_norm, row.h_norm,
                                  row.implied, static_cast<long long>(row.finite)});
        rows.push_back({{"delta", row.delta},
                        {"q", row.q},
                        {"grad_norm", row.grad_norm},
                        {"f_norm", row.f_norm},
                        {"h_norm", row.h_norm},
                        {"implied", row.implied},
                        {"finite", row.finite}});
      }
      samples.push_back({{"nx", nx[static_cast<std::size_t>(pass)]},
                         {"sample", k},
                         {"seed", rep.seed},
                         {"input_residual", rep.input_residual},
                         {"rows", rows}});
    }
  res.json = {{"samples", samples},
              {"dual_surrogate", true},
              {"working_delta", meyers_working_delta(reps[0])},
              {"epsilon", cfg.grid.epsilon}};
  if (dg.refine) {
    // Relative change of each sample's implied constant under one refinement.
    json change = json::array();
    for (std::size_t i = 0; i < reps[0][0].rows.size(); ++i) {
      double worst = 0.0;
      for (int k = 0; k < n; ++k) {
        const double a = reps[0][static_cast<std::size_t>(k)].rows[i].implied;
        const double b = reps[1][static_cast<std::size_t>(k)].rows[i].implied;
        worst = std::max(worst, std::abs(b - a) / std::max(std::abs(a), 1e-300));
      }
      change.push_back({{"delta", reps[0][0].rows[i].delta}, {"max_relative_change", worst}});
    }
    res.json["refinement"] = change;
  }
  return res;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ConstraintError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  return 3;
}

json error_json_of(const std::exception& e, const std::string& command) {
  json err = {{"message", e.what()}, {"kind", "error"}};
  if (const auto* he = dynamic_cast<const Error*>(&e)) err["kind"] = he->kind();
  if (const auto* ce = dynamic_cast<const ConstraintError*>(&e)) err["constraint"] = ce->constraint();
  return {{"error", err}, {"exit_code", exit_code(e)}, {"command", command}};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

// ---------------------------------------------------------------- public API

json parse_config(const std::string& toml_text, const std::string& source_name) {
  try {
    return toml_to_json(toml::parse(toml_text, source_name));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source_name << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
       << e.description();
    throw ConfigError(os.str());
  }
}

json load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_run_config(const json& root) {
  if (!root.is_object()) throw ConfigError("configuration must be a table");
  static const std::set<std::string> tables = {"field",  "grid",   "boundary",         "source", "study",
                                               "cell",   "rve",    "error_functional", "solver", "diagnose",
                                               "validate"};
  for (const auto& [k, v] : root.items())
    if (k != "seed" && !tables.count(k)) throw ConfigError("unknown top-level key '" + k + "'");

  RunConfig cfg;
  auto& st = cfg.study;
  if (root.contains("seed")) {
    const auto& s = root.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
      throw ConfigError("seed must be a non-negative integer");
    st.seed = s.get<std::uint64_t>();
  }
  st.field = parse_field(root);
  st.boundary = parse_profile(root, "boundary");
  st.source = parse_profile(root, "source");

  {
    Section s(root, "grid");
    cfg.grid.nx = s.integer("nx", cfg.grid.nx);
    cfg.grid.T = s.number("T", cfg.grid.T);
    cfg.grid.c_par = s.number("c_par", cfg.grid.c_par);
    cfg.grid.epsilon = s.number("epsilon", cfg.grid.epsilon);
    st.cells_per_period = s.integer("cells_per_period", st.cells_per_period);
    st.stored_per_period = s.integer("stored_per_period", st.stored_per_period);
    s.finish();
    if (cfg.grid.nx < 3) throw ConfigError("[grid] nx must be at least 3");
    if (!(cfg.grid.T > 0.0)) throw ConfigError("[grid] T must be positive");
    if (!(cfg.grid.c_par > 0.0)) throw ConfigError("[grid] c_par must be positive");
    if (!(cfg.grid.epsilon > 0.0 && cfg.grid.epsilon <= 1.0)) throw ConfigError("[grid] epsilon must lie in (0, 1]");
    st.time = {0.0, cfg.grid.T};
    st.c_par = cfg.grid.c_par;
  }
  {
    Section s(root, "study");
    st.epsilons = s.numbers("epsilons", {});
    st.delta = s.number("delta", st.delta);
    st.r_list = s.numbers("r_list", st.r_list);
    cfg.samples = s.integer("samples", cfg.samples);
    s.finish();
    if (cfg.samples < 1) throw ConfigError("[study] samples must be positive");
  }
  {
    Section s(root, "cell");
    st.cell_nx = s.integer("nx", st.cell_nx);
    st.cell_nt = s.integer("nt", st.cell_nt);
    st.cell_options.tol = s.number("tol", st.cell_options.tol);
    st.cell_options.max_periods = s.integer("max_periods", st.cell_options.max_periods);
    s.finish();
  }
  {
    Section s(root, "rve");
    cfg.rve_L = s.integer("L", cfg.rve_L);
    cfg.rve_samples = s.integer("samples", cfg.rve_samples);
    s.finish();
  }
  {
    Section s(root, "error_functional");
    cfg.ef_epsilons = s.numbers("epsilons", {});
    st.error_options.cells_per_period = s.integer("cells_per_period", st.error_options.cells_per_period);
    st.error_options.levels_per_period = s.integer("levels_per_period", st.error_options.levels_per_period);
    st.error_options.coarse_cells = s.integer("coarse_cells", st.error_options.coarse_cells);
    s.finish();
  }
  {
    Section s(root, "solver");
    st.tol = s.number("tol", st.tol);
    cfg.shift = s.number("lambda_shift", cfg.shift);
    cfg.store_stride = s.integer("store_stride", cfg.store_stride);
    s.finish();
    if (cfg.store_stride < 1) throw ConfigError("[solver] store_stride must be positive");
  }
  {
    Section s(root, "diagnose");
    auto& d = cfg.diagnose;
    d.radii = s.numbers("radii", d.radii);
    d.center = s.vec2("center", d.center);
    if (const auto* t = s.get("t_top")) {
      if (!t->is_number()) throw ConfigError("[diagnose] t_top must be a number");
      d.t_top = t->get<double>();
    }
    d.samples = s.integer("samples", d.samples);
    d.energy = s.boolean("energy", d.energy);
    d.deltas = s.numbers("deltas", d.deltas);
    d.refine = s.boolean("refine", d.refine);
    s.finish();
  }
  {
    Section s(root, "validate");
    cfg.validate_samples = s.integer("samples", cfg.validate_samples);
    s.finish();
  }
  return cfg;
}

SpaceTimeGrid explicit_grid(const RunConfig& config, int stride, int nx_override) {
  const int nx = nx_override > 0 ? nx_override : config.grid.nx;
  const double h = 1.0 / (nx - 1);
  const double dt_max = config.grid.c_par * h * h;
  int steps = static_cast<int>(std::ceil(config.grid.T / dt_max - 1e-9));
  steps = (steps + stride - 1) / stride * stride;
  return SpaceTimeGrid::build(config.study.field.dim, Interval{0.0, 1.0}, nx, Interval{0.0, config.grid.T}, steps + 1,
                              config.grid.c_par);
}

std::string render_csv(const Result& result, const Provenance& prov) {
  std::ostringstream os;
  os << "# homog " << HOMOG_VERSION << " command=" << prov.command << " config_hash=" << prov.config_hash
     << " seed=" << prov.seed << "\n";
  for (std::size_t c = 0; c < result.table.columns.size(); ++c)
    os << (c ? "," : "") << result.table.columns[c].first;
  os << "\n";
  for (const auto& row : result.table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_cell(row[c]);
    os << "\n";
  }
  return os.str();
}

std::string render_csv_sidecar(const Result& result, const Provenance& prov) {
  json cols = json::array();
  for (const auto& [name, desc] : result.table.columns) cols.push_back({{"name", name}, {"description", desc}});
  const json doc = {{"command", prov.command},
                    {"config_hash", prov.config_hash},
                    {"seed", prov.seed},
                    {"version", HOMOG_VERSION},
                    {"columns", cols},
                    {"comment_lines", 1}};
  return doc.dump(2) + "\n";
}

std::string render_json(const Result& result, const Provenance& prov) {
  const json doc = {{"command", prov.command},
                    {"config_hash", prov.config_hash},
                    {"seed", prov.seed},
                    {"version", HOMOG_VERSION},
                    {"result", result.json}};
  return doc.dump(2) + "\n";
}

Result run_command(const std::string& command, const RunConfig& config) {
  if (command == "validate-field") return cmd_validate(config);
  if (command == "homogenize") return cmd_homogenize(config);
  if (command == "corrector") return cmd_corrector(config);
  if (command == "solve") return cmd_solve(config);
  if (command == "error-functional") return cmd_error_functional(config);
  if (command == "converge") return cmd_converge(config);
  if (command == "diagnose-caccioppoli") return cmd_caccioppoli(config);
  if (command == "diagnose-meyers") return cmd_meyers(config);
  throw ConfigError("unknown subcommand '" + command + "'");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parabolic homogenization toolkit", "homog"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path, out_dir, format = "json";
  int jobs = 1;
  std::uint64_t seed = 0;
  bool timing = false;
  auto* config_opt = app.add_option("--config", config_path, "TOML run configuration");
  app.add_option("--jobs", jobs, "maximum concurrent solves")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (default: stdout)");
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  auto* seed_opt = app.add_option("--seed", seed, "overrides the configured seed");
  app.add_flag("--timing", timing, "record wall-clock runtimes (outputs stop being reproducible)");
  const std::map<std::string, std::string> about{
      {"solve", "solve the heterogeneous problem at one scale"},
      {"corrector", "space-time correctors on the unit cell"},
      {"homogenize", "effective coefficients (periodic cell or RVE average)"},
      {"error-functional", "error functional E(eps) per scale"},
      {"converge", "convergence sweep over eps, or an ensemble of them"},
      {"diagnose-caccioppoli", "interior and global energy-estimate constants"},
      {"diagnose-meyers", "higher integrability of the gradient"},
      {"validate-field", "check bounds and sign conditions of a field"}};
  for (const char* name : kCommands) app.add_subcommand(name, about.at(name));

  std::string command = "?";
  try {
    if (args.size() > 1 && !args[1].empty() && args[1][0] != '-' &&
        std::find(std::begin(kCommands), std::end(kCommands), args[1]) == std::end(kCommands))
      throw ConfigError("unknown subcommand '" + args[1] + "'");
    std::vector<std::string> argv_store = args;
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      throw ConfigError(e.what());
    }
    command = app.get_subcommands().front()->get_name();
    if (config_opt->count() == 0) throw ConfigError("--config is required");

    json raw = load_config(config_path);
    if (seed_opt->count() > 0) raw["seed"] = seed;
    const std::string hash = config_hash(raw);
    RunConfig cfg = parse_run_config(raw);
    cfg.study.jobs = jobs;
    cfg.study.timing = timing;
    omp_set_num_threads(jobs);

    const Result result = run_command(command, cfg);
    const Provenance prov{command, hash, cfg.study.seed};
    if (out_dir.empty()) {
      out << (format == "csv" ? render_csv(result, prov) : render_json(result, prov));
    } else {
      std::error_code ec;
      std::filesystem::create_directories(out_dir, ec);
      if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
      const std::filesystem::path dir(out_dir);
      if (format == "csv") {
        write_file(dir / (result.name + ".csv"), render_csv(result, prov));
        write_file(dir / (result.name + ".csv.json"), render_csv_sidecar(result, prov));
      } else {
        write_file(dir / (result.name + ".json"), render_json(result, prov));
      }
    }
    return 0;
  } catch (const std::exception& e) {
    const json doc = error_json_of(e, command);
    err << doc.dump() << "\n";
    return doc.at("exit_code").get<int>();
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace homog::cli
