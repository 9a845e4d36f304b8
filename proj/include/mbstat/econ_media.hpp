#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mbstat/errors.hpp"
#include "mbstat/types.hpp"

namespace mbstat {

/// K rating grades with a row-stochastic K x K matrix of transition
/// probabilities over horizon T.
struct TransitionMatrix {
  Vector<double> grades;
  Matrix<double> a;
  double horizon = 1.0;

  Index size() const { return grades.size(); }
  void validate() const;
};

inline constexpr double kStochasticTolerance = 1e-12;

/// v(x_i) = (1/T) sum_j (x_j - x_i) a_ij.
Vector<double> velocity_from_transition(const TransitionMatrix& tm);

/// Transition CSV: a `grades,x_1,...,x_K` line, then `i,j,prob` rows with
/// 1-based indices. Missing entries are 0.
TransitionMatrix parse_transition_csv(std::string_view text, double horizon);

/// Uniform cells over [0,1]^w, w in {1, 2}. Cell (i, j) has flat index
/// i + cells_per_axis * j; axis 0 varies fastest.
class MediaGrid {
 public:
  MediaGrid(Index cells_per_axis, int dims);

  Index cells_per_axis() const { return n_; }
  int dims() const { return dims_; }
  Index cell_count() const { return dims_ == 1 ? n_ : n_ * n_; }
  double dx() const { return 1.0 / static_cast<double>(n_); }
  double cell_volume() const { return dims_ == 1 ? dx() : dx() * dx(); }

  /// Position index of `cell` along `axis`.
  Index axis_index(Index cell, int axis) const { return axis == 0 ? cell % n_ : cell / n_; }
  double center(Index i) const { return (static_cast<double>(i) + 0.5) * dx(); }
  double coordinate(Index cell, int axis) const { return center(axis_index(cell, axis)); }

 private:
  Index n_;
  int dims_;
};

/// Piecewise-linear interpolation of grade velocities onto cell centres along
/// one axis, constant beyond the outer grades. The first cell never points
/// below 0 and the last never above 1.
Vector<double> interpolate_velocity(const Vector<double>& grades, const Vector<double>& v, const MediaGrid& grid);

enum class VelocityMode {
  /// v is given; only the continuity equation is stepped and P = C v.
  Prescribed,
  /// P is evolved by the flow equation and v = P / C.
  SelfConsistent,
};

/// Fields for one moment order. P and v are cells x dims.
struct MediaField {
  Vector<double> C;
  Matrix<double> P;
  Matrix<double> v;
};

struct MediaState {
  MediaGrid grid;
  VelocityMode mode = VelocityMode::Prescribed;
  double t = 0.0;
  std::vector<MediaField> orders;  // index m - 1
};

/// Fraction of max(C) below which a cell counts as vacuum with v = 0.
inline constexpr double kVacuumFloor = 1e-12;

/// P = C v cellwise for every order.
void compute_flow(MediaState& state);

/// v = P / C where C exceeds the vacuum floor, else 0.
void velocity_from_flow(MediaState& state);

/// Source term for one order: returns a cells-long vector given the current
/// field component and time.
using FieldSource = std::function<Vector<double>(const Vector<double>& q, double t)>;

struct SourcePreset {
  enum class Kind { Zero, Constant, Relaxation };
  Kind kind = Kind::Zero;
  double value = 0.0;  // constant rate, or relaxation target
  double rate = 0.0;   // relaxation rate

  static SourcePreset zero() { return {}; }
  static SourcePreset constant(double v) { return {Kind::Constant, v, 0.0}; }
  static SourcePreset relaxation(double rate, double target) { return {Kind::Relaxation, target, rate}; }

  /// rate * (target - q) for relaxation.
  FieldSource field() const;
  /// Same law on a whole-market scalar.
  double scalar(double q) const;
  std::string describe() const;
};

/// Largest dt the upwind scheme accepts at this CFL bound: the limit is on
/// dt times the total outflow rate of any cell.
double max_stable_dt(const MediaState& state, double cfl_max);

/// Advances C by dt with first-order upwind fluxes and zero-flux walls. In
/// prescribed mode P is refreshed to C v afterwards. Throws NumericError
/// naming dt when the CFL bound is exceeded.
void step_continuity(MediaState& state, const FieldSource& F, double dt, double cfl_max = 0.9);

/// Advances every component of P by dt with the same scheme, then sets
/// v = P / C.
void step_flow(MediaState& state, const FieldSource& G, double dt, double cfl_max = 0.9);

/// One full time step for the state's mode: continuity, and in
/// self-consistent mode the flow equation with the same old velocities.
void advance(MediaState& state, const FieldSource& F, const FieldSource& G, double dt, double cfl_max = 0.9);

/// integral of C over the domain, for order m (1-based).
double total_mass(const MediaState& state, int m);
/// integral of P over the domain, per axis.
Vector<double> total_flow(const MediaState& state, int m);
/// integral x C / integral C per axis. Throws NumericError on zero mass.
Vector<double> mean_risk(const MediaState& state, int m);

struct TrajectorySample {
  double t = 0.0;
  int m = 1;
  double C_total = 0.0;
  Vector<double> P_total;
  /// Empty for pure ODE runs, which carry no spatial information.
  Vector<double> X_mean;
};

struct MarketTrajectory {
  std::vector<TrajectorySample> samples;
};

/// Whole-market right-hand side dq/dt = f(t, q) for order m.
using ScalarSource = std::function<double(double t, double q, int m)>;

/// dC/dt = F, dP/dt = G per order by classical RK4 from t0 to t1. The last
/// step is shortened to land on t1.
MarketTrajectory integrate_market(const Vector<double>& C0, const Vector<double>& P0, const ScalarSource& F,
                                  const ScalarSource& G, double t0, double t1, double dt);

/// Scenario for a media run, read from `key = value` lines.
struct Scenario {
  Index grid_cells = 128;
  int dimensions = 1;
  double dt = 1e-3;
  double t_end = 1.0;
  double cfl_max = 0.9;
  VelocityMode mode = VelocityMode::Prescribed;
  /// `constant:v` (w values joined by '/') or `transition:path`.
  std::string velocity = "constant:0";
  double transition_horizon = 1.0;
  int orders = 1;
  /// `uniform:level`, `gaussian:center,width[,amplitude]` or `point:x`.
  std::string initial = "uniform:1";
  SourcePreset source;
  SourcePreset flow_source;
  /// Steps between snapshots; 0 keeps only the first and last.
  Index snapshot_every = 0;

  void validate() const;
};

/// Parses scenario text. `#` starts a comment. Unknown keys are errors.
Scenario parse_scenario(std::string_view text);
void apply_scenario_key(Scenario& sc, std::string_view key, std::string_view value);
SourcePreset parse_source(std::string_view text);

/// Builds the initial state. `transition_text` holds the transition CSV when
/// the velocity spec names one.
MediaState initial_state(const Scenario& sc, std::string_view transition_text = {});

struct MediaRun {
  MarketTrajectory trajectory;
  std::string snapshots_csv;
  Index steps = 0;
  /// Largest relative drift of total mass across orders.
  double mass_drift = 0.0;
  double x_min = 1.0;
  double x_max = 0.0;
};

/// Runs the scenario to t_end, sampling the trajectory every step and
/// snapshots at the configured cadence.
MediaRun run_scenario(const Scenario& sc, MediaState state);

/// Snapshot rows `t,cell_index,x,m,C_sigma,P,v`; w = 2 values joined by '/'.
std::string snapshot_header();
void append_snapshot(std::string& out, const MediaState& state);
/// Trajectory CSV `t,m,C_total,P_total,X_mean`.
std::string write_trajectory_csv(const MarketTrajectory& traj);

}  // namespace mbstat
