#include "mbstat/econ_media.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mbstat/summation.hpp"
#include "mbstat/text_io.hpp"

namespace mbstat {

void TransitionMatrix::validate() const {
  const Index k = size();
  if (k < 1) throw InputError("transition matrix needs at least one grade");
  if (a.rows() != k || a.cols() != k) throw InputError("transition matrix must be K x K with K grades");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("transition horizon T must be positive");
  for (Index i = 0; i < k; ++i) {
    if (!(grades(i) >= 0.0 && grades(i) <= 1.0)) throw InputError("grades must lie in [0, 1]");
    if (i > 0 && !(grades(i) > grades(i - 1))) throw InputError("grades not sorted strictly increasing");
  }
  for (Index i = 0; i < k; ++i) {
    NeumaierSum<double> row;
    for (Index j = 0; j < k; ++j) {
      if (!(a(i, j) >= 0.0) || !std::isfinite(a(i, j))) {
        throw InputError("transition probabilities must be finite and non-negative");
      }
      row.add(a(i, j));
    }
    if (std::abs(row.value() - 1.0) > kStochasticTolerance) {
      throw InputError("row " + std::to_string(i + 1) + " not stochastic (sums to " + format_double(row.value()) +
                       ")");
    }
  }
}

Vector<double> velocity_from_transition(const TransitionMatrix& tm) {
  tm.validate();
  const Index k = tm.size();
  Vector<double> v(k);
  for (Index i = 0; i < k; ++i) {
    NeumaierSum<double> acc;
    for (Index j = 0; j < k; ++j) acc.add((tm.grades(j) - tm.grades(i)) * tm.a(i, j));
    v(i) = acc.value() / tm.horizon;
  }
  return v;
}

TransitionMatrix parse_transition_csv(std::string_view text, double horizon) {
  LineReader reader(text);
  std::string_view line;
  TransitionMatrix tm;
  tm.horizon = horizon;
  bool have_grades = false;
  std::map<std::pair<Index, Index>, double> entries;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (!have_grades) {
      if (f.empty() || f[0] != "grades" || f.size() < 2) throw CsvError(reader.row(), "expected a 'grades' line");
      tm.grades.resize(static_cast<Index>(f.size() - 1));
      for (std::size_t i = 1; i < f.size(); ++i) {
        const auto x = parse_double(f[i]);
        if (!x) throw CsvError(reader.row(), "non-numeric grade '" + std::string(f[i]) + "'");
        tm.grades(static_cast<Index>(i - 1)) = *x;
      }
      have_grades = true;
      continue;
    }
    if (f.size() != 3) throw CsvError(reader.row(), "expected 3 fields i,j,prob, got " + std::to_string(f.size()));
    if (f[0] == "i") continue;
    const auto i = parse_int(f[0]);
    const auto j = parse_int(f[1]);
    const auto prob = parse_double(f[2]);
    if (!i || !j || !prob) throw CsvError(reader.row(), "non-numeric field");
    const Index k = tm.grades.size();
    if (*i < 1 || *i > k || *j < 1 || *j > k) throw CsvError(reader.row(), "grade index out of range");
    if (!entries.emplace(std::pair<Index, Index>(*i - 1, *j - 1), *prob).second) {
      throw CsvError(reader.row(), "duplicate entry");
    }
  }
  if (!have_grades) throw InputError("transition file has no 'grades' line");
  tm.a = Matrix<double>::Zero(tm.grades.size(), tm.grades.size());
  for (const auto& [ij, p] : entries) tm.a(ij.first, ij.second) = p;
  tm.validate();
  return tm;
}

MediaGrid::MediaGrid(Index cells_per_axis, int dims) : n_(cells_per_axis), dims_(dims) {
  if (n_ < 1) throw InputError("grid needs at least one cell per axis");
  if (dims_ != 1 && dims_ != 2) throw InputError("only 1 or 2 risk dimensions are supported");
}

Vector<double> interpolate_velocity(const Vector<double>& grades, const Vector<double>& v, const MediaGrid& grid) {
  if (grades.size() != v.size() || grades.size() < 1) throw InputError("grades and velocities differ in length");
  const Index n = grid.cells_per_axis();
  const Index k = grades.size();
  Vector<double> out(n);
  for (Index i = 0; i < n; ++i) {
    const double x = grid.center(i);
    if (x <= grades(0)) {
      out(i) = v(0);
    } else if (x >= grades(k - 1)) {
      out(i) = v(k - 1);
    } else {
      const Index hi = std::upper_bound(grades.data(), grades.data() + k, x) - grades.data();
      const double w = (x - grades(hi - 1)) / (grades(hi) - grades(hi - 1));
      out(i) = (1.0 - w) * v(hi - 1) + w * v(hi);
    }
  }
  out(0) = std::max(out(0), 0.0);
  out(n - 1) = std::min(out(n - 1), 0.0);
  return out;
}

void compute_flow(MediaState& state) {
  for (auto& f : state.orders) f.P = f.v.array().colwise() * f.C.array();
}

void velocity_from_flow(MediaState& state) {
  for (auto& f : state.orders) {
    const double floor = kVacuumFloor * (f.C.size() > 0 ? f.C.maxCoeff() : 0.0);
    f.v.setZero(f.P.rows(), f.P.cols());
    for (Index c = 0; c < f.C.size(); ++c) {
      if (f.C(c) > floor && f.C(c) > 0.0) f.v.row(c) = f.P.row(c) / f.C(c);
    }
  }
}

FieldSource SourcePreset::field() const {
  switch (kind) {
    case Kind::Zero:
      return [](const Vector<double>& q, double) { return Vector<double>::Zero(q.size()).eval(); };
    case Kind::Constant:
      return [v = value](const Vector<double>& q, double) { return Vector<double>::Constant(q.size(), v).eval(); };
    case Kind::Relaxation:
      return [r = rate, target = value](const Vector<double>& q, double) {
        return (r * (target - q.array())).matrix().eval();
      };
  }
  return {};
}

double SourcePreset::scalar(double q) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return value;
    case Kind::Relaxation:
      return rate * (value - q);
  }
  return 0.0;
}

std::string SourcePreset::describe() const {
  switch (kind) {
    case Kind::Zero:
      return "zero";
    case Kind::Constant:
      return "constant:" + format_double(value);
    case Kind::Relaxation:
      return "relaxation:" + format_double(rate) + "," + format_double(value);
  }
  return {};
}

namespace {

// Face velocity between neighbouring cells lo and hi along an axis.
double face_velocity(const Matrix<double>& v, Index lo, Index hi, int axis) {
  return 0.5 * (v(lo, axis) + v(hi, axis));
}

Index neighbour_stride(const MediaGrid& g, int axis) { return axis == 0 ? 1 : g.cells_per_axis(); }

// Net outward flux per cell, divided by dx: the upwind divergence of q v.
Vector<double> upwind_divergence(const MediaGrid& g, const Vector<double>& q, const Matrix<double>& v) {
  Vector<double> div = Vector<double>::Zero(q.size());
  const Index n = g.cells_per_axis();
  for (int axis = 0; axis < g.dims(); ++axis) {
    const Index stride = neighbour_stride(g, axis);
    for (Index c = 0; c < g.cell_count(); ++c) {
      if (g.axis_index(c, axis) + 1 >= n) continue;
      const Index r = c + stride;
      const double u = face_velocity(v, c, r, axis);
      const double flux = u > 0.0 ? u * q(c) : u * q(r);
      div(c) += flux;
      div(r) -= flux;
    }
  }
  return div / g.dx();
}

double max_outflow_rate(const MediaGrid& g, const Matrix<double>& v) {
  Vector<double> out = Vector<double>::Zero(g.cell_count());
  const Index n = g.cells_per_axis();
  for (int axis = 0; axis < g.dims(); ++axis) {
    const Index stride = neighbour_stride(g, axis);
    for (Index c = 0; c < g.cell_count(); ++c) {
      if (g.axis_index(c, axis) + 1 >= n) continue;
      const Index r = c + stride;
      const double u = face_velocity(v, c, r, axis);
      if (u > 0.0) out(c) += u;
      if (u < 0.0) out(r) -= u;
    }
  }
  return out.size() > 0 ? out.maxCoeff() / g.dx() : 0.0;
}

void check_step(const MediaState& state, double dt, double cfl_max) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("dt must be positive");
  if (!(cfl_max > 0.0 && cfl_max <= 1.0)) throw InputError("cfl_max must lie in (0, 1]");
  const double limit = max_stable_dt(state, cfl_max);
  if (dt > limit) {
    throw NumericError("CFL violation: dt=" + format_double(dt) + " exceeds max admissible dt=" + format_double(limit));
  }
}

}  // namespace

double max_stable_dt(const MediaState& state, double cfl_max) {
  double rate = 0.0;
  for (const auto& f : state.orders) rate = std::max(rate, max_outflow_rate(state.grid, f.v));
  return rate > 0.0 ? cfl_max / rate : std::numeric_limits<double>::infinity();
}

void step_continuity(MediaState& state, const FieldSource& F, double dt, double cfl_max) {
  check_step(state, dt, cfl_max);
  for (std::size_t k = 0; k < state.orders.size(); ++k) {
    auto& f = state.orders[k];
    const Vector<double> src = F(f.C, state.t);
    f.C = f.C - dt * upwind_divergence(state.grid, f.C, f.v) + dt * src;
    if (f.C.size() > 0 && f.C.minCoeff() < 0.0) {
      throw NumericError("negative C at m=" + std::to_string(k + 1) + " after t=" + format_double(state.t) +
                         "; the source removes more than the cell holds, reduce dt");
    }
  }
  if (state.mode == VelocityMode::Prescribed) compute_flow(state);
}

void step_flow(MediaState& state, const FieldSource& G, double dt, double cfl_max) {
  check_step(state, dt, cfl_max);
  for (auto& f : state.orders) {
    for (Index a = 0; a < f.P.cols(); ++a) {
      const Vector<double> p = f.P.col(a);
      f.P.col(a) = p - dt * upwind_divergence(state.grid, p, f.v) + dt * G(p, state.t);
    }
  }
  velocity_from_flow(state);
}

void advance(MediaState& state, const FieldSource& F, const FieldSource& G, double dt, double cfl_max) {
  step_continuity(state, F, dt, cfl_max);
  if (state.mode == VelocityMode::SelfConsistent) step_flow(state, G, dt, cfl_max);
  state.t += dt;
}

double total_mass(const MediaState& state, int m) {
  const auto& C = state.orders.at(static_cast<std::size_t>(m - 1)).C;
  return compensated_sum(C) * state.grid.cell_volume();
}

Vector<double> total_flow(const MediaState& state, int m) {
  const auto& P = state.orders.at(static_cast<std::size_t>(m - 1)).P;
  Vector<double> out(P.cols());
  for (Index a = 0; a < P.cols(); ++a) out(a) = compensated_sum(P.col(a)) * state.grid.cell_volume();
  return out;
}

Vector<double> mean_risk(const MediaState& state, int m) {
  const auto& C = state.orders.at(static_cast<std::size_t>(m - 1)).C;
  const auto& g = state.grid;
  NeumaierSum<double> mass;
  for (Index c = 0; c < C.size(); ++c) mass.add(C(c));
  if (!(mass.value() > 0.0)) throw NumericError("zero total mass at m=" + std::to_string(m));
  Vector<double> x(g.dims());
  for (int a = 0; a < g.dims(); ++a) {
    NeumaierSum<double> moment;
    for (Index c = 0; c < C.size(); ++c) moment.add(g.coordinate(c, a) * C(c));
    x(a) = std::clamp(moment.value() / mass.value(), 0.0, 1.0);
  }
  return x;
}

MarketTrajectory integrate_market(const Vector<double>& C0, const Vector<double>& P0, const ScalarSource& F,
                                  const ScalarSource& G, double t0, double t1, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("dt must be positive");
  if (!(t1 >= t0)) throw InputError("t_span must be increasing");
  if (C0.size() != P0.size()) throw InputError("initial C and P differ in order count");
  const Index steps = static_cast<Index>(std::ceil((t1 - t0) / dt - 1e-9));

  auto rk4 = [](const ScalarSource& f, double t, double y, double h, int m) {
    const double k1 = f(t, y, m);
    const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1, m);
    const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2, m);
    const double k4 = f(t + h, y + h * k3, m);
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  MarketTrajectory traj;
  Vector<double> C = C0;
  Vector<double> P = P0;
  auto record = [&](double t) {
    for (Index m = 0; m < C.size(); ++m) {
      traj.samples.push_back({t, static_cast<int>(m + 1), C(m), Vector<double>::Constant(1, P(m)), {}});
    }
  };
  record(t0);
  for (Index s = 0; s < steps; ++s) {
    const double t = t0 + static_cast<double>(s) * dt;
    const double next = s + 1 == steps ? t1 : t0 + static_cast<double>(s + 1) * dt;
    const double h = next - t;
    for (Index m = 0; m < C.size(); ++m) {
      C(m) = rk4(F, t, C(m), h, static_cast<int>(m + 1));
      P(m) = rk4(G, t, P(m), h, static_cast<int>(m + 1));
    }
    record(next);
  }
  return traj;
}

void Scenario::validate() const {
  if (grid_cells < 1) throw InputError("grid_cells must be positive");
  if (dimensions != 1 && dimensions != 2) throw InputError("dimensions must be 1 or 2");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("dt must be positive");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw InputError("t_end must be positive");
  if (!(cfl_max > 0.0 && cfl_max <= 1.0)) throw InputError("cfl_max must lie in (0, 1]");
  if (!(transition_horizon > 0.0)) throw InputError("transition_horizon must be positive");
  if (orders < 1) throw InputError("orders must be positive");
  if (snapshot_every < 0) throw InputError("snapshot_every must be non-negative");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double number(std::string_view key, std::string_view text) {
  const auto v = parse_double(trim(text));
  if (!v) throw InputError("scenario key '" + std::string(key) + "': not a number '" + std::string(text) + "'");
  return *v;
}

std::int64_t integer(std::string_view key, std::string_view text) {
  const auto v = parse_int(trim(text));
  if (!v) throw InputError("scenario key '" + std::string(key) + "': not an integer '" + std::string(text) + "'");
  return *v;
}

// Splits "name:args" into its parts; args may be empty.
std::pair<std::string_view, std::string_view> split_spec(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) return {trim(text), {}};
  return {trim(text.substr(0, colon)), trim(text.substr(colon + 1))};
}

// One value per axis from "a" or "a/b".
Vector<double> per_axis(std::string_view what, std::string_view text, int dims) {
  const auto parts = split_fields(text, '/');
  if (parts.size() != 1 && parts.size() != static_cast<std::size_t>(dims)) {
    throw InputError(std::string(what) + " needs 1 or " + std::to_string(dims) + " '/'-joined values");
  }
  Vector<double> out(dims);
  for (int a = 0; a < dims; ++a) out(a) = number(what, parts[parts.size() == 1 ? 0 : static_cast<std::size_t>(a)]);
  return out;
}

std::vector<double> number_list(std::string_view what, std::string_view text) {
  std::vector<double> out;
  if (text.empty()) return out;
  for (auto f : split_fields(text)) out.push_back(number(what, f));
  return out;
}

}  // namespace

SourcePreset parse_source(std::string_view text) {
  const auto [name, args] = split_spec(text);
  const auto vals = number_list("source", args);
  if (name == "zero" && vals.empty()) return SourcePreset::zero();
  if (name == "constant" && vals.size() == 1) return SourcePreset::constant(vals[0]);
  if (name == "relaxation" && vals.size() == 2) return SourcePreset::relaxation(vals[0], vals[1]);
  throw InputError("unknown source '" + std::string(text) +
                   "' (expected zero, constant:v or relaxation:rate,target)");
}

void apply_scenario_key(Scenario& sc, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "grid_cells") {
    sc.grid_cells = integer(key, value);
  } else if (key == "dimensions") {
    sc.dimensions = static_cast<int>(integer(key, value));
  } else if (key == "dt") {
    sc.dt = number(key, value);
  } else if (key == "t_end") {
    sc.t_end = number(key, value);
  } else if (key == "cfl_max") {
    sc.cfl_max = number(key, value);
  } else if (key == "velocity_mode") {
    if (value == "prescribed") {
      sc.mode = VelocityMode::Prescribed;
    } else if (value == "self_consistent") {
      sc.mode = VelocityMode::SelfConsistent;
    } else {
      throw InputError("velocity_mode must be prescribed or self_consistent");
    }
  } else if (key == "velocity") {
    sc.velocity = std::string(value);
  } else if (key == "transition_horizon") {
    sc.transition_horizon = number(key, value);
  } else if (key == "orders") {
    sc.orders = static_cast<int>(integer(key, value));
  } else if (key == "initial") {
    sc.initial = std::string(value);
  } else if (key == "source") {
    sc.source = parse_source(value);
  } else if (key == "flow_source") {
    sc.flow_source = parse_source(value);
  } else if (key == "snapshot_every") {
    sc.snapshot_every = integer(key, value);
  } else {
    throw InputError("unknown scenario key '" + std::string(key) + "'");
  }
}

Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  LineReader reader(text);
  std::string_view line;
  while (reader.next(line)) {
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw CsvError(reader.row(), "expected key = value");
    try {
      apply_scenario_key(sc, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const CsvError&) {
      throw;
    } catch (const InputError& e) {
      throw CsvError(reader.row(), e.what());
    }
  }
  sc.validate();
  return sc;
}

MediaState initial_state(const Scenario& sc, std::string_view transition_text) {
  sc.validate();
  MediaState state{MediaGrid(sc.grid_cells, sc.dimensions), sc.mode, 0.0, {}};
  const auto& g = state.grid;
  const Index cells = g.cell_count();
  const int w = g.dims();

  Vector<double> C(cells);
  const auto [init, init_args] = split_spec(sc.initial);
  if (init == "uniform") {
    C.setConstant(init_args.empty() ? 1.0 : number("initial", init_args));
  } else if (init == "gaussian") {
    const auto parts = split_fields(init_args);
    if (parts.size() != 2 && parts.size() != 3) throw InputError("initial gaussian needs center,width[,amplitude]");
    const Vector<double> center = per_axis("initial", parts[0], w);
    const double width = number("initial", parts[1]);
    const double amp = parts.size() == 3 ? number("initial", parts[2]) : 1.0;
    if (!(width > 0.0)) throw InputError("initial gaussian width must be positive");
    for (Index c = 0; c < cells; ++c) {
      double r2 = 0.0;
      for (int a = 0; a < w; ++a) r2 += std::pow(g.coordinate(c, a) - center(a), 2);
      C(c) = amp * std::exp(-r2 / (2.0 * width * width));
    }
  } else if (init == "point") {
    const Vector<double> at = per_axis("initial", init_args, w);
    Index flat = 0;
    for (int a = 0; a < w; ++a) {
      if (!(at(a) >= 0.0 && at(a) <= 1.0)) throw InputError("initial point must lie in [0, 1]");
      const Index i = std::min<Index>(static_cast<Index>(at(a) / g.dx()), g.cells_per_axis() - 1);
      flat += a == 0 ? i : i * g.cells_per_axis();
    }
    C.setZero();
    C(flat) = 1.0 / g.cell_volume();
  } else {
    throw InputError("unknown initial field '" + sc.initial + "'");
  }
  if (!C.allFinite() || C.minCoeff() < 0.0) throw InputError("initial field must be finite and non-negative");

  Matrix<double> v(cells, w);
  const auto [vel, vel_args] = split_spec(sc.velocity);
  if (vel == "constant") {
    const Vector<double> vc = per_axis("velocity", vel_args, w);
    for (Index c = 0; c < cells; ++c) v.row(c) = vc.transpose();
  } else if (vel == "transition") {
    if (transition_text.empty()) throw InputError("velocity names a transition file but none was loaded");
    const auto tm = parse_transition_csv(transition_text, sc.transition_horizon);
    const Vector<double> axis_v = interpolate_velocity(tm.grades, velocity_from_transition(tm), g);
    for (Index c = 0; c < cells; ++c) {
      for (int a = 0; a < w; ++a) v(c, a) = axis_v(g.axis_index(c, a));
    }
  } else {
    throw InputError("unknown velocity '" + sc.velocity + "' (expected constant:v or transition:path)");
  }

  state.orders.assign(static_cast<std::size_t>(sc.orders), MediaField{C, Matrix<double>(), v});
  compute_flow(state);
  return state;
}

std::string snapshot_header() { return "t,cell_index,x,m,C_sigma,P,v\n"; }

namespace {

std::string joined(const auto& row) {
  std::string s;
  for (Index a = 0; a < row.size(); ++a) {
    if (a > 0) s += '/';
    s += format_double(row(a));
  }
  return s;
}

}  // namespace

void append_snapshot(std::string& out, const MediaState& state) {
  const auto& g = state.grid;
  const std::string t = format_double(state.t);
  for (std::size_t k = 0; k < state.orders.size(); ++k) {
    const auto& f = state.orders[k];
    for (Index c = 0; c < g.cell_count(); ++c) {
      Vector<double> x(g.dims());
      for (int a = 0; a < g.dims(); ++a) x(a) = g.coordinate(c, a);
      out += t + ',' + std::to_string(c) + ',' + joined(x) + ',' + std::to_string(k + 1) + ',' +
             format_double(f.C(c)) + ',' + joined(f.P.row(c)) + ',' + joined(f.v.row(c)) + '\n';
    }
  }
}

std::string write_trajectory_csv(const MarketTrajectory& traj) {
  std::string out = "t,m,C_total,P_total,X_mean\n";
  for (const auto& s : traj.samples) {
    out += format_double(s.t) + ',' + std::to_string(s.m) + ',' + format_double(s.C_total) + ',' +
           joined(s.P_total) + ',' + joined(s.X_mean) + '\n';
  }
  return out;
}

MediaRun run_scenario(const Scenario& sc, MediaState state) {
  sc.validate();
  const FieldSource F = sc.source.field();
  const FieldSource G = sc.flow_source.field();
  const int orders = static_cast<int>(state.orders.size());

  MediaRun run;
  std::vector<double> initial_mass(static_cast<std::size_t>(orders));
  for (int m = 1; m <= orders; ++m) initial_mass[static_cast<std::size_t>(m - 1)] = total_mass(state, m);

  auto sample = [&] {
    for (int m = 1; m <= orders; ++m) {
      const double mass = total_mass(state, m);
      const double m0 = initial_mass[static_cast<std::size_t>(m - 1)];
      if (m0 > 0.0) run.mass_drift = std::max(run.mass_drift, std::abs(mass - m0) / m0);
      TrajectorySample s{state.t, m, mass, total_flow(state, m), {}};
      if (mass > 0.0) {
        s.X_mean = mean_risk(state, m);
        run.x_min = std::min(run.x_min, s.X_mean.minCoeff());
        run.x_max = std::max(run.x_max, s.X_mean.maxCoeff());
      }
      run.trajectory.samples.push_back(std::move(s));
    }
  };

  run.snapshots_csv = snapshot_header();
  append_snapshot(run.snapshots_csv, state);
  sample();

  const double t0 = state.t;
  const Index steps = static_cast<Index>(std::ceil((sc.t_end - t0) / sc.dt - 1e-9));
  for (Index s = 0; s < steps; ++s) {
    const double next = s + 1 == steps ? sc.t_end : t0 + static_cast<double>(s + 1) * sc.dt;
    const double h = next - state.t;
    try {
      advance(state, F, G, h, sc.cfl_max);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(s + 1));
    }
    state.t = next;
    ++run.steps;
    sample();
    const bool last = s + 1 == steps;
    if (last || (sc.snapshot_every > 0 && (s + 1) % sc.snapshot_every == 0)) append_snapshot(run.snapshots_csv, state);
  }
  return run;
}

}  // namespace mbstat
