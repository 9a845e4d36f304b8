#include "mbstat/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <ostream>

#include "mbstat/econ_media.hpp"
#include "mbstat/moments.hpp"
#include "mbstat/prob_approx.hpp"
#include "mbstat/risk_domain.hpp"
#include "mbstat/text_io.hpp"
#include "mbstat/trade_data.hpp"

namespace mbstat {

namespace {

using json = nlohmann::json;

struct Common {
  std::string input;
  std::string output;
  std::uint64_t seed = 0;
  bool verbose = false;
  std::string config;
};

// Fills options not given on the command line from an INI/TOML file whose
// keys are long option names. CLI11 only reads config files on the root app.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::FileError&) {
    throw InputError("cannot open config file '" + path + "'");
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string name = item.name;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = cmd->get_option_no_throw("--" + name);
    if (opt == nullptr || name == "config") throw InputError("config file '" + path + "': unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw InputError("config file '" + path + "': key '" + item.name + "': " + e.what());
    }
  }
}

void add_common(CLI::App* cmd, Common& c, bool input_required, bool output_required) {
  auto* in = cmd->add_option("-i,--input", c.input, "Input file");
  if (input_required) in->required();
  auto* out = cmd->add_option("-o,--output", c.output, "Output file");
  if (output_required) out->required();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_flag("--verbose", c.verbose, "Progress on stdout");
}

void add_config(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI file of option values; flags take precedence");
}

// "a/b.csv" -> "a/b<suffix>.csv".
std::string sibling_path(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  const std::string ext = p.has_extension() ? p.extension().string() : ".csv";
  p.replace_extension();
  return p.string() + suffix + ext;
}

// Option values as `key=value` lines, leaving out the config path itself.
std::string effective_config(const CLI::App* cmd) {
  std::string out;
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    const auto& results = opt->results();
    std::string value;
    if (!results.empty()) {
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    } else {
      value = opt->get_default_str();
    }
    out += name + "=" + value + "\n";
  }
  return out;
}

void write_sidecar(const std::string& output, const std::string& command, const CLI::App* cmd, const Common& c,
                   json diagnostics) {
  json meta;
  meta["command"] = command;
  meta["output"] = output;
  meta["input"] = c.input;
  meta["seed"] = c.seed;
  meta["effective_config"] = effective_config(cmd);
  meta["diagnostics"] = std::move(diagnostics);
  write_text_file(output + ".meta.json", meta.dump(2) + "\n");
}

// json cannot hold NaN or infinity; those become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector<double>& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

DensePanel load_panel(const std::string& path, bool fill_gaps) {
  const TickSeries series = parse_tick_csv(read_text_file(path));
  return make_panel(series, fill_gaps ? GapPolicy::ForwardFill : GapPolicy::Reject);
}

// ---- synth

struct SynthOpts {
  Common c;
  SynthSpec spec;
  std::string risk_output;
};

void setup_synth(CLI::App& app, SynthOpts& o) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic tick series and risk ratings");
  add_common(cmd, o.c, false, true);
  add_config(cmd, o.c);
  cmd->add_option("--companies", o.spec.companies)->capture_default_str();
  cmd->add_option("--steps", o.spec.steps)->capture_default_str();
  cmd->add_option("--initial-price", o.spec.initial_price)->capture_default_str();
  cmd->add_option("--drift", o.spec.drift)->capture_default_str();
  cmd->add_option("--volatility", o.spec.volatility)->capture_default_str();
  cmd->add_option("--volume-mean", o.spec.volume_mean)->capture_default_str();
  cmd->add_option("--volume-sigma", o.spec.volume_sigma)->capture_default_str();
  cmd->add_option("--orders", o.spec.orders, "Moment orders in the risk matrix")->capture_default_str();
  cmd->add_option("--risks", o.spec.risks, "Risks J in the risk matrix")->capture_default_str();
  cmd->add_option("--risk-min", o.spec.risk_min)->capture_default_str();
  cmd->add_option("--risk-max", o.spec.risk_max)->capture_default_str();
  cmd->add_option("--risk-output", o.risk_output, "Risk CSV path (default <output>_risk.csv)");
}

int cmd_synth(const CLI::App* cmd, SynthOpts& o, std::ostream& out) {
  o.spec.validate();
  const auto market = generate_synthetic(o.spec, o.c.seed);
  const std::string risk_path = o.risk_output.empty() ? sibling_path(o.c.output, "_risk") : o.risk_output;
  write_text_file(o.c.output, write_tick_csv(market.series));
  write_text_file(risk_path, write_risk_csv(market.risks));
  write_sidecar(o.c.output, "synth", cmd, o.c,
                {{"ticks", market.series.size()}, {"companies", o.spec.companies}, {"risk_output", risk_path}});
  if (o.c.verbose) out << "wrote " << market.series.size() << " ticks to " << o.c.output << "\n";
  return 0;
}

// ---- moments

struct MomentOpts {
  Common c;
  WindowConfig cfg;
  unsigned workers = 1;
  bool fill_gaps = false;
};

void add_window_options(CLI::App* cmd, Index& n, Index& xi, int& n_max) {
  cmd->add_option("-N,--ticks", n, "Ticks per window")->capture_default_str();
  cmd->add_option("--xi", xi, "Return shift in steps")->capture_default_str();
  cmd->add_option("--n-max", n_max, "Highest moment order")->capture_default_str();
}

void setup_moments(CLI::App& app, MomentOpts& o) {
  auto* cmd = app.add_subcommand("moments", "Market-based and frequency-based moments per window");
  add_common(cmd, o.c, true, true);
  add_config(cmd, o.c);
  o.cfg.ticks_per_window = 8;
  o.cfg.n_max = 4;
  add_window_options(cmd, o.cfg.ticks_per_window, o.cfg.xi_steps, o.cfg.n_max);
  cmd->add_option("--stride", o.cfg.stride, "Window stride, 0 for N")->capture_default_str();
  cmd->add_flag("--prescale", o.cfg.prescale, "Divide by the window mean before powering");
  cmd->add_option("--workers", o.workers)->capture_default_str();
  cmd->add_flag("--fill-gaps", o.fill_gaps, "Forward-fill missing steps");
}

int cmd_moments(const CLI::App* cmd, MomentOpts& o, std::ostream& out) {
  o.cfg.validate();
  const DensePanel panel = load_panel(o.c.input, o.fill_gaps);
  const auto sets = compute_moments(panel, o.cfg, o.workers);
  write_text_file(o.c.output, write_moment_csv(sets));
  write_sidecar(o.c.output, "moments", cmd, o.c,
                {{"windows", sets.size()}, {"companies", panel.company_count()}, {"steps", panel.steps()}});
  if (o.c.verbose) out << "wrote " << sets.size() << " window moment sets to " << o.c.output << "\n";
  return 0;
}

// ---- aggregate

struct AggregateOpts {
  Common c;
  std::string risk_input;
  double side = 1.0;
  int risks = 0;
  AggregationConfig cfg;
  bool fill_gaps = false;
};

inline constexpr double kMarkowitzTripwire = 1e-9;

void setup_aggregate(CLI::App& app, AggregateOpts& o) {
  auto* cmd = app.add_subcommand("aggregate", "Collective moments per risk cell and for the whole market");
  add_common(cmd, o.c, true, true);
  add_config(cmd, o.c);
  cmd->add_option("--risk", o.risk_input, "Risk CSV")->required();
  cmd->add_option("-d,--side", o.side, "Cell side d in (0, 1]")->capture_default_str();
  cmd->add_option("--risks", o.risks, "Risks J used for cells, 0 for all")->capture_default_str();
  o.cfg.ticks_per_window = 8;
  add_window_options(cmd, o.cfg.ticks_per_window, o.cfg.xi_steps, o.cfg.n_max);
  cmd->add_option("--k-x", o.cfg.k_x, "Cell window in units of N")->capture_default_str();
  cmd->add_option("--k-m", o.cfg.k_m, "Market window in units of cell windows")->capture_default_str();
  cmd->add_flag("--fill-gaps", o.fill_gaps, "Forward-fill missing steps");
}

int cmd_aggregate(const CLI::App* cmd, AggregateOpts& o, std::ostream& out, std::ostream& err) {
  o.cfg.validate();
  const DensePanel panel = load_panel(o.c.input, o.fill_gaps);
  const auto risks = parse_risk_csv(read_text_file(o.risk_input));
  int J = o.risks;
  if (J == 0) {
    J = std::numeric_limits<int>::max();
    for (const auto& r : risks) J = std::min(J, r.risks());
    if (risks.empty()) J = 1;
  }
  const RiskCellGrid grid = assign_cells(risks, o.side, J, o.cfg.n_max);
  const Aggregation agg = aggregate(panel, grid, o.cfg);
  write_text_file(o.c.output, write_aggregate_csv(agg));

  double worst = 0.0;
  auto check = [&](const CollectiveMoments& cm) {
    if (std::isnan(cm.markowitz_return)) return;
    const double scale = std::max(std::abs(cm.ret(0)), std::abs(cm.markowitz_return));
    if (scale > 0.0) worst = std::max(worst, std::abs(cm.ret(0) - cm.markowitz_return) / scale);
  };
  for (const auto& series : agg.cells) {
    for (const auto& cm : series) check(cm);
  }
  for (const auto& cm : agg.market) check(cm);

  write_sidecar(o.c.output, "aggregate", cmd, o.c,
                {{"cells", agg.cells.size()},
                 {"market_windows", agg.market.size()},
                 {"risk_input", o.risk_input},
                 {"markowitz_max_deviation", worst}});
  if (worst > kMarkowitzTripwire) {
    err << "error: Markowitz deviation " << format_double(worst) << " exceeds " << format_double(kMarkowitzTripwire)
        << "\n";
    return 3;
  }
  if (o.c.verbose) {
    out << "wrote " << agg.cells.size() << " cells and " << agg.market.size() << " market windows to "
        << o.c.output << "\n";
  }
  return 0;
}

// ---- density

struct DensityOpts {
  Common c;
  std::vector<double> moments;
  std::string company;
  Index window = 0;
  std::string kind = "p";
  int n = 0;
  double b = 0.0;
  int two_k = 0;
  Index points = 4096;
  double range_sigmas = 8.0;
  double p_min = std::numeric_limits<double>::quiet_NaN();
  double p_max = std::numeric_limits<double>::quiet_NaN();
  InversionSpec inversion;
  bool verify = false;
};

void setup_density(CLI::App& app, DensityOpts& o) {
  auto* cmd = app.add_subcommand("density", "Density from the n-approximation of the characteristic function");
  add_common(cmd, o.c, false, true);
  add_config(cmd, o.c);
  cmd->add_option("--moments", o.moments, "Raw moments p(;1),p(;2),... inline")->delimiter(',');
  cmd->add_option("--company", o.company, "Company in the moment CSV");
  cmd->add_option("--window", o.window, "Window index in the moment CSV")->capture_default_str();
  cmd->add_option("--kind", o.kind, "Moment kind in the moment CSV (p, r, pi)")->capture_default_str();
  cmd->add_option("--n", o.n, "Approximation order, 0 for all given moments")->capture_default_str();
  cmd->add_option("--b", o.b, "Regularizer weight b; default scales with the variance");
  cmd->add_option("--two-k", o.two_k, "Regularizer power 2k; default smallest even above n");
  cmd->add_option("--points", o.points, "Density grid points")->capture_default_str();
  cmd->add_option("--range-sigmas", o.range_sigmas, "Half-width of the grid in standard deviations")
      ->capture_default_str();
  cmd->add_option("--p-min", o.p_min, "Grid lower end");
  cmd->add_option("--p-max", o.p_max, "Grid upper end");
  cmd->add_option("--x-points", o.inversion.x_points, "Quadrature nodes")->capture_default_str();
  cmd->add_option("--cutoff", o.inversion.cutoff, "Integration cutoff X*, 0 for automatic")->capture_default_str();
  cmd->add_option("--negativity-budget", o.inversion.negativity_budget)->capture_default_str();
  cmd->add_flag("--no-extend", [&o](std::int64_t) { o.inversion.auto_extend = false; }, "Keep the grid range fixed");
  cmd->add_flag("--verify-moments", o.verify, "Report recovered moments");
}

int cmd_density(const CLI::App* cmd, DensityOpts& o, std::ostream& out) {
  MomentVector raw;
  if (!o.moments.empty()) {
    if (!o.c.input.empty()) throw InputError("give either --moments or --input, not both");
    raw = Eigen::Map<const MomentVector>(o.moments.data(), static_cast<Index>(o.moments.size()));
  } else if (!o.c.input.empty()) {
    if (o.company.empty()) throw InputError("--company is required with a moment CSV");
    raw = select_moments(parse_moment_csv(read_text_file(o.c.input)), o.company, o.window, o.kind);
  } else {
    throw InputError("no moments: give --moments or --input");
  }
  if (!raw.allFinite()) throw InputError("moments must be finite");
  const int n = o.n == 0 ? static_cast<int>(raw.size()) : o.n;
  if (n < 1 || n > raw.size()) {
    throw InputError("--n " + std::to_string(n) + " needs that many moments, got " + std::to_string(raw.size()));
  }

  const double variance = raw.size() >= 2 ? raw(1) - raw(0) * raw(0) : std::numeric_limits<double>::quiet_NaN();
  if (raw.size() >= 2 && !(variance > 0.0)) throw NumericError("variance non-positive");
  const MomentVector target = raw.head(n);
  const MomentVector cumulants = moments_to_cumulants(target);

  Regularizer reg;
  if (o.b > 0.0 || o.two_k > 0) {
    const int two_k = o.two_k > 0 ? o.two_k : (n % 2 == 0 ? n + 2 : n + 1);
    if (!(o.b > 0.0)) throw InputError("--two-k needs --b");
    reg = Regularizer::power(o.b, two_k);
  } else if (n == 2) {
    reg = Regularizer::none();
  } else {
    if (std::isnan(variance)) throw InputError("n = 1 needs p(;2) to scale the regularizer, or give --b");
    reg = default_regularizer(n, variance);
  }
  const CharFnApprox f(cumulants, reg);

  DensityGridSpec grid;
  if (!std::isnan(o.p_min) || !std::isnan(o.p_max)) {
    if (std::isnan(o.p_min) || std::isnan(o.p_max)) throw InputError("give both --p-min and --p-max");
    grid = {o.p_min, o.p_max, o.points};
  } else {
    if (std::isnan(variance)) throw InputError("n = 1 needs --p-min and --p-max or p(;2)");
    grid = centered_grid(raw(0), std::sqrt(variance), o.range_sigmas, o.points);
  }

  const DensityGrid dg = charfn_to_density(f, grid, o.inversion);
  if (std::abs(dg.normalization_residual) > 1e-6) {
    throw NumericError("insufficient coverage: density integrates to 1 + " + format_double(dg.normalization_residual));
  }
  write_text_file(o.c.output, write_density_csv(dg));

  json diag{{"n", n},
            {"regularizer", reg.describe()},
            {"cumulants", vector_json(cumulants)},
            {"cutoff", dg.cutoff},
            {"x_points", dg.x_points},
            {"p_min", dg.p(0)},
            {"p_max", dg.p(dg.p.size() - 1)},
            {"points", dg.p.size()},
            {"normalization_residual", dg.normalization_residual},
            {"negative_mass", dg.negative_mass},
            {"min_eta", dg.min_eta},
            {"imag_residue", dg.imag_residue}};
  if (o.verify) {
    const MomentVector got = density_moments(dg, n);
    Vector<double> rel(n);
    for (int m = 0; m < n; ++m) {
      rel(m) = std::abs(got(m) - target(m)) / std::max(std::abs(target(m)), 1e-300);
      out << "m=" << m + 1 << " target=" << format_double(target(m)) << " recovered=" << format_double(got(m))
          << " rel_err=" << format_double(rel(m)) << "\n";
    }
    diag["recovered_moments"] = vector_json(got);
    diag["moment_rel_errors"] = vector_json(rel);
  }
  write_sidecar(o.c.output, "density", cmd, o.c, std::move(diag));
  if (o.c.verbose) out << "wrote " << dg.p.size() << " density points to " << o.c.output << "\n";
  return 0;
}

// ---- media

struct MediaOpts {
  Common c;
  std::string scenario;
  std::string trajectory;
  std::vector<std::string> sets;
  double dt = 0.0;
  double t_end = 0.0;
  Index cells = 0;
  double cfl_max = 0.0;
};

void setup_media(CLI::App& app, MediaOpts& o) {
  auto* cmd = app.add_subcommand("media", "Continuous economic media simulation");
  add_common(cmd, o.c, false, true);
  cmd->add_option("--config", o.scenario, "Scenario file (key = value)");
  cmd->add_option("--trajectory", o.trajectory, "Trajectory CSV path (default <output>_trajectory.csv)");
  cmd->add_option("--set", o.sets, "Override a scenario key: key=value");
  cmd->add_option("--dt", o.dt, "Override dt");
  cmd->add_option("--t-end", o.t_end, "Override t_end");
  cmd->add_option("--grid-cells", o.cells, "Override grid_cells");
  cmd->add_option("--cfl-max", o.cfl_max, "Override cfl_max");
}

int cmd_media(const CLI::App* cmd, MediaOpts& o, std::ostream& out) {
  Scenario sc;
  std::filesystem::path base;
  if (!o.scenario.empty()) {
    sc = parse_scenario(read_text_file(o.scenario));
    base = std::filesystem::path(o.scenario).parent_path();
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    apply_scenario_key(sc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cmd->count("--dt")) sc.dt = o.dt;
  if (cmd->count("--t-end")) sc.t_end = o.t_end;
  if (cmd->count("--grid-cells")) sc.grid_cells = o.cells;
  if (cmd->count("--cfl-max")) sc.cfl_max = o.cfl_max;
  sc.validate();

  std::string transition_text;
  if (sc.velocity.rfind("transition:", 0) == 0) {
    std::filesystem::path p(sc.velocity.substr(std::string("transition:").size()));
    if (p.is_relative()) p = base / p;
    transition_text = read_text_file(p.string());
  }
  MediaState state = initial_state(sc, transition_text);
  const double limit = max_stable_dt(state, sc.cfl_max);
  MediaRun run;
  try {
    run = run_scenario(sc, std::move(state));
  } catch (const NumericError& e) {
    if (std::string_view(e.what()).find("CFL") == std::string_view::npos) throw;
    throw NumericError(std::string(e.what()) + "; suggested dt=" + format_double(0.9 * limit));
  }

  const std::string traj_path = o.trajectory.empty() ? sibling_path(o.c.output, "_trajectory") : o.trajectory;
  write_text_file(o.c.output, run.snapshots_csv);
  write_text_file(traj_path, write_trajectory_csv(run.trajectory));
  write_sidecar(o.c.output, "media", cmd, o.c,
                {{"scenario", o.scenario},
                 {"steps", run.steps},
                 {"dt", sc.dt},
                 {"t_end", sc.t_end},
                 {"grid_cells", sc.grid_cells},
                 {"dimensions", sc.dimensions},
                 {"source", sc.source.describe()},
                 {"flow_source", sc.flow_source.describe()},
                 {"mass_drift", run.mass_drift},
                 {"x_min", number(run.x_min)},
                 {"x_max", number(run.x_max)},
                 {"trajectory", traj_path}});
  out << "steps=" << run.steps << " mass_drift=" << format_double(run.mass_drift) << " X_C range=["
      << format_double(run.x_min) << ", " << format_double(run.x_max) << "]\n";
  return 0;
}

// ---- report

struct ReportOpts {
  std::vector<std::string> inputs;
  std::string output;
};

void setup_report(CLI::App& app, ReportOpts& o) {
  auto* cmd = app.add_subcommand("report", "Concatenate metadata sidecars into one JSON array");
  cmd->add_option("-i,--input,inputs", o.inputs, "Sidecar files (.meta.json)")->required();
  cmd->add_option("-o,--output", o.output, "Report path; stdout when omitted");
}

int cmd_report(ReportOpts& o, std::ostream& out) {
  json all = json::array();
  for (const auto& path : o.inputs) {
    try {
      all.push_back(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
      throw InputError("sidecar '" + path + "' is not valid JSON: " + e.what());
    }
  }
  const std::string text = all.dump(2) + "\n";
  if (o.output.empty()) {
    out << text;
  } else {
    write_text_file(o.output, text);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Market-based statistical moments, risk aggregation, densities and media simulation", "mbstat");
  app.require_subcommand(1);
  SynthOpts synth;
  MomentOpts moments;
  AggregateOpts agg;
  DensityOpts density;
  MediaOpts media;
  ReportOpts report;
  setup_synth(app, synth);
  setup_moments(app, moments);
  setup_aggregate(app, agg);
  setup_density(app, density);
  setup_media(app, media);
  setup_report(app, report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    const Common* common = name == "synth"       ? &synth.c
                           : name == "moments"   ? &moments.c
                           : name == "aggregate" ? &agg.c
                           : name == "density"   ? &density.c
                                                 : nullptr;
    if (common != nullptr) apply_config_file(cmd, common->config);
    if (name == "synth") return cmd_synth(cmd, synth, out);
    if (name == "moments") return cmd_moments(cmd, moments, out);
    if (name == "aggregate") return cmd_aggregate(cmd, agg, out, err);
    if (name == "density") return cmd_density(cmd, density, out);
    if (name == "media") return cmd_media(cmd, media, out);
    return cmd_report(report, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace mbstat
