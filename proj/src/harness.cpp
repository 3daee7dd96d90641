#include "homog/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>

#include "homog/error.hpp"
#include "homog/norms.hpp"

namespace homog {

namespace {

/// Rethrows the active exception with `stage` prepended, keeping its kind.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  try {
    throw;
  } catch (const ConstraintError& e) {
    throw ConstraintError(e.constraint(), stage + ": " + e.what());
  } catch (const NonConvergenceError& e) {
    throw NonConvergenceError(stage + ": " + e.what(), e.last_residual(), e.iterations());
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw NumericError(stage + ": " + e.what());
  }
}

std::string eps_label(double eps) {
  std::ostringstream os;
  os << "eps=" << eps;
  return os.str();
}

DiscreteField sample(const DataSource& src, const SpaceTimeGrid& g) {
  DiscreteField out(g);
  if (src.is_zero()) return out;
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) out.at(n, k) = src.value(g, n, k);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<RateFit> try_fit(const std::vector<EpsilonRow>& rows, double (*get)(const EpsilonRow&)) {
  if (rows.size() < 3) return std::nullopt;
  std::vector<double> e, x;
  for (const auto& r : rows) {
    if (!(get(r) > 0.0)) return std::nullopt;
    e.push_back(get(r));
    x.push_back(r.epsilon);
  }
  return fit_rate(e, x);
}

}  // namespace

CoefficientField FieldSpec::build(std::uint64_t seed) const {
  switch (kind) {
    case FieldKind::constant:
      return make_constant(dim, a0, b0, d0, bounds, enforce_bounds);
    case FieldKind::periodic: {
      auto p = periodic;
      p.dim = dim;
      p.bounds = bounds;
      p.enforce_bounds = enforce_bounds;
      return make_periodic(p);
    }
    case FieldKind::checkerboard: {
      auto p = checkerboard;
      p.dim = dim;
      p.bounds = bounds;
      p.seed = seed;
      p.torus_cells = torus_cells;
      p.enforce_bounds = enforce_bounds;
      return make_checkerboard(p);
    }
    case FieldKind::laminate: {
      auto p = laminate;
      p.dim = dim;
      p.bounds = bounds;
      p.enforce_bounds = enforce_bounds;
      return make_laminate(p);
    }
  }
  throw ConfigError("unknown field kind");
}

const char* to_string(Profile::Kind kind) {
  switch (kind) {
    case Profile::Kind::zero: return "zero";
    case Profile::Kind::affine: return "affine";
    case Profile::Kind::gaussian_bump: return "gaussian_bump";
    case Profile::Kind::sine_sheet: return "sine_sheet";
  }
  return "?";
}

ScalarFunction Profile::function(int dim) const {
  const Profile p = *this;
  switch (kind) {
    case Kind::zero:
      return [](const SpacePoint&, double) { return 0.0; };
    case Kind::affine:
      return [p, dim](const SpacePoint& x, double t) {
        double v = p.offset + p.gradient[0] * x[0] + p.time_slope * t;
        if (dim == 2) v += p.gradient[1] * x[1];
        return v;
      };
    case Kind::gaussian_bump:
      return [p, dim](const SpacePoint& x, double) {
        double r2 = (x[0] - p.center[0]) * (x[0] - p.center[0]);
        if (dim == 2) r2 += (x[1] - p.center[1]) * (x[1] - p.center[1]);
        return p.offset + p.amplitude * std::exp(-r2 / (p.width * p.width));
      };
    case Kind::sine_sheet:
      return [p, dim](const SpacePoint& x, double t) {
        double v = std::sin(M_PI * p.wavenumber * x[0]);
        if (dim == 2) v *= std::sin(M_PI * p.wavenumber * x[1]);
        return p.offset + p.amplitude * v * std::exp(-p.decay * t);
      };
  }
  throw ConfigError("unknown profile kind");
}

DataSource Profile::source(int dim) const {
  if (kind == Kind::zero) return {};
  return function(dim);
}

DataSource Profile::shifted_source(int dim, double Lambda) const {
  if (kind == Kind::zero) return {};
  return [fn = function(dim), Lambda](const SpacePoint& x, double t) { return std::exp(-Lambda * t) * fn(x, t); };
}

RateFit fit_rate(const std::vector<double>& errors, const std::vector<double>& epsilons) {
  if (errors.size() != epsilons.size()) throw ConstraintError("aligned", "errors and epsilons differ in length");
  if (errors.size() < 3) throw ConstraintError("points", "rate fit needs at least 3 points");
  const auto n = static_cast<double>(errors.size());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0) || !(epsilons[i] > 0.0))
      throw ConstraintError("positive", "rate fit needs positive errors and epsilons");
    x.push_back(std::log(epsilons[i]));
    y.push_back(std::log(errors[i]));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConstraintError("points", "rate fit needs distinct epsilons");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - fit.intercept - fit.slope * x[i];
    ss_res += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

SpaceTimeGrid study_grid(const StudyConfig& config, int* store_stride) {
  if (config.epsilons.empty()) throw ConfigError("study needs at least one epsilon");
  for (double e : config.epsilons)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError("epsilons must lie in (0, 1]");
  if (config.cells_per_period < 1 || config.stored_per_period < 1)
    throw ConfigError("cells_per_period and stored_per_period must be positive");
  if (!(config.c_par > 0.0)) throw ConfigError("c_par must be positive");
  if (!(config.time.width() > 0.0)) throw ConfigError("time interval is empty");

  const double eps_min = *std::min_element(config.epsilons.begin(), config.epsilons.end());
  const int cells = static_cast<int>(std::ceil(config.cells_per_period / eps_min - 1e-9));
  const double h = 1.0 / cells;
  const double dt_max = config.c_par * h * h;
  const int stride = std::max(1, static_cast<int>(std::floor(eps_min * eps_min / (config.stored_per_period * dt_max))));
  int steps = static_cast<int>(std::ceil(config.time.width() / dt_max - 1e-9));
  steps = (steps + stride - 1) / stride * stride;
  if (store_stride) *store_stride = stride;
  return SpaceTimeGrid::build(config.field.dim, Interval{0.0, 1.0}, cells + 1, config.time, steps + 1,
                              config.c_par);
}

ConvergenceReport run_convergence_study(const StudyConfig& config) {
  ConvergenceReport rep;
  int stride = 1;
  const auto grid = study_grid(config, &stride);
  const int dim = config.field.dim;

  CoefficientField field;
  try {
    field = config.field.build(config.seed);
  } catch (...) {
    rethrow_in_stage("field");
  }
  rep.field = field.describe();
  rep.seed = config.seed;
  rep.Lambda = field.Lambda();
  rep.h = grid.h();
  rep.dt = grid.dt();
  rep.store_stride = stride;
  const double Lambda = rep.Lambda;

  std::vector<CorrectorSolution> correctors;
  try {
    rep.coefficients =
        periodic_coefficients(field, config.cell_nx, config.cell_nt, config.cell_options, &correctors);
  } catch (...) {
    rethrow_in_stage("corrector");
  }

  const DataSource f = config.boundary.source(dim);
  const DataSource f_hat = config.boundary.shifted_source(dim, Lambda);
  const DataSource h = config.source.source(dim);
  const DataSource h_hat = config.source.shifted_source(dim, Lambda);

  DiscreteField p0, p0_hat;
  try {
    p0 = solve_homogenized(rep.coefficients, field.bounds(), grid, f, 0.0, h, stride).solution;
    p0_hat = solve_homogenized(rep.coefficients, field.bounds(), grid, f_hat, Lambda, h_hat, stride).solution;
  } catch (...) {
    rethrow_in_stage("homogenized solve");
  }
  const auto& stored = p0.grid();
  const NormWorkspace ws(stored, RegionMask::full(stored));
  std::vector<DiscreteField> grad0;
  for (int a = 0; a < dim; ++a) grad0.push_back(partial(p0, a));
  rep.f_norm = w1q_par_norm(sample(f_hat, stored), RegionMask::full(stored), 2.0 + config.delta);
  const double beta = beta_of(config.delta);

  const std::size_t n_eps = config.epsilons.size();
  rep.rows.resize(n_eps);
  std::vector<std::exception_ptr> errors(n_eps);
  const int jobs = std::max(1, config.jobs);

#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (long i = 0; i < static_cast<long>(n_eps); ++i) {
    const double eps = config.epsilons[static_cast<std::size_t>(i)];
    auto& row = rep.rows[static_cast<std::size_t>(i)];
    row.epsilon = eps;
    const auto t0 = std::chrono::steady_clock::now();
    std::string stage = "heterogeneous solve";
    try {
      try {
        CauchyDirichletProblem pr;
        pr.coefficients = coefficients_of(rescale(field, eps));
        pr.grid = grid;
        pr.boundary = f;
        pr.source = h;
        pr.tol = config.tol;
        pr.store_stride = stride;
        const auto p = solve_problem(pr).solution;
        stage = "shifted solve";
        pr.boundary = f_hat;
        pr.source = h_hat;
        pr.lambda_shift = Lambda;
        const auto p_hat = solve_problem(pr).solution;

        stage = "norms";
        row.l2_error = lp_norm(p - p0, 2.0);
        row.l2_norm = lp_norm(p, 2.0);
        std::vector<DiscreteField> dgrad;
        for (int a = 0; a < dim; ++a) dgrad.push_back(partial(p, a) - grad0[static_cast<std::size_t>(a)]);
        row.dual_grad_error = ws.dual_norm(dgrad);
        row.transform_residual = lp_norm(exp_transform(p, Lambda) - p_hat, 2.0);
        row.transform_bound = 5.0 * grid.dt() * Lambda * row.l2_norm;

        stage = "error functional";
        row.error = error_functional(field, correctors, eps, config.error_options);
        stage = "rate bound check";
        row.rate_bound = rate_bound_check(p_hat, p0_hat, row.error.total, rep.f_norm, config.r_list, beta, ws);
      } catch (...) {
        rethrow_in_stage(stage + " at " + eps_label(eps));
      }
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
    if (config.timing) row.runtime = seconds_since(t0);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (const auto& row : rep.rows)
    if (!(row.transform_residual <= row.transform_bound)) rep.transform_ok = false;
  rep.l2_rate = try_fit(rep.rows, [](const EpsilonRow& r) { return r.l2_error; });
  rep.dual_rate = try_fit(rep.rows, [](const EpsilonRow& r) { return r.dual_grad_error; });
  rep.e_rate = try_fit(rep.rows, [](const EpsilonRow& r) { return r.error.total; });
  std::vector<RateBoundReport> th;
  for (const auto& row : rep.rows) th.push_back(row.rate_bound);
  rep.rate_bound_sweep = rate_bound_sweep(th);
  return rep;
}

Quartiles quartiles(std::vector<double> values) {
  Quartiles q;
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  const auto at = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

std::vector<EnsembleRow> aggregate(const std::vector<ConvergenceReport>& samples) {
  std::vector<EnsembleRow> rows;
  if (samples.empty()) return rows;
  const std::size_t n_eps = samples.front().rows.size();
  for (std::size_t i = 0; i < n_eps; ++i) {
    std::vector<double> l2, dual, e;
    for (const auto& s : samples) {
      if (s.rows.size() != n_eps) throw ConstraintError("aligned", "ensemble samples use different epsilon lists");
      l2.push_back(s.rows[i].l2_error);
      dual.push_back(s.rows[i].dual_grad_error);
      e.push_back(s.rows[i].error.total);
    }
    rows.push_back({samples.front().rows[i].epsilon, quartiles(l2), quartiles(dual), quartiles(e)});
  }
  return rows;
}

EnsembleReport monte_carlo_ensemble(const StudyConfig& config, int n_samples) {
  if (n_samples < 2) throw ConfigError("an ensemble needs at least 2 samples");
  EnsembleReport rep;
  rep.base_seed = config.seed;
  rep.n_samples = n_samples;
  const auto n = static_cast<std::size_t>(n_samples);
  std::vector<std::optional<ConvergenceReport>> results(n);
  std::vector<std::optional<EnsembleFailure>> failures(n);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, config.jobs))
  for (long k = 0; k < static_cast<long>(n); ++k) {
    StudyConfig cfg = config;
    cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
    cfg.jobs = 1;
    try {
      results[static_cast<std::size_t>(k)] = run_convergence_study(cfg);
    } catch (const Error& e) {
      failures[static_cast<std::size_t>(k)] = EnsembleFailure{static_cast<int>(k), cfg.seed, e.kind(), e.what()};
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(k)] = EnsembleFailure{static_cast<int>(k), cfg.seed, "error", e.what()};
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (results[k]) {
      rep.samples.push_back(std::move(*results[k]));
      rep.sample_index.push_back(static_cast<int>(k));
    }
    if (failures[k]) rep.failures.push_back(*failures[k]);
  }
  rep.rows = aggregate(rep.samples);
  return rep;
}

}  // namespace homog
