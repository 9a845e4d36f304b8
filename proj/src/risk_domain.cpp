#include "mbstat/risk_domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mbstat/errors.hpp"
#include "mbstat/moments.hpp"
#include "mbstat/text_io.hpp"

namespace mbstat {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double checked_power(double x, int m) {
  double r = x;
  for (int k = 1; k < m; ++k) r *= x;
  if (!std::isfinite(r) || std::abs(r) > kOverflowLimit) {
    throw NumericError("moment overflow at m=" + std::to_string(m));
  }
  return r;
}

double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

// Panel columns of each order's members; companies without trades are skipped.
using MemberColumns = std::vector<std::vector<Index>>;

MemberColumns member_columns(const DensePanel& panel, const RiskCellGrid& grid, const CellKey& cell, int n_max) {
  if (n_max > grid.orders()) throw InputError("grid was built for fewer moment orders than requested");
  MemberColumns out(static_cast<std::size_t>(n_max));
  for (int m = 1; m <= n_max; ++m) {
    for (const auto& name : grid.members(cell, m)) {
      const Index col = panel.column(name);
      if (col >= 0) out[static_cast<std::size_t>(m - 1)].push_back(col);
    }
  }
  return out;
}

MemberColumns all_columns(const DensePanel& panel, int n_max) {
  std::vector<Index> cols(static_cast<std::size_t>(panel.company_count()));
  for (Index q = 0; q < panel.company_count(); ++q) cols[static_cast<std::size_t>(q)] = q;
  return MemberColumns(static_cast<std::size_t>(n_max), cols);
}

void fill_ratios(CollectiveMoments& cm) {
  cm.ret = collective_return(cm);
  cm.price = collective_price(cm);
}

void finalize_from_partials(CollectiveMoments& cm, int n_max) {
  cm.value_sum.resize(n_max);
  cm.volume_sum.resize(n_max);
  cm.past_value_sum = MomentVector::Constant(n_max, cm.has_returns ? 0.0 : kNaN);
  for (int m = 0; m < n_max; ++m) {
    const auto k = static_cast<std::size_t>(m);
    cm.value_sum(m) = cm.partials.value[k].value();
    cm.volume_sum(m) = cm.partials.volume[k].value();
    if (cm.has_returns) cm.past_value_sum(m) = cm.partials.past_value[k].value();
  }
  const double len = static_cast<double>(cm.length);
  cm.value = cm.value_sum / len;
  cm.volume = cm.volume_sum / len;
  cm.past_value = cm.past_value_sum / len;
  fill_ratios(cm);
}

CollectiveMoments accumulate_window(const DensePanel& panel, const MemberColumns& members, Index time_index,
                                    Index first, Index length, Index xi, int n_max) {
  CollectiveMoments cm;
  cm.time_index = time_index;
  cm.first_step = first;
  cm.length = length;
  cm.has_returns = first - xi >= 0;
  const auto orders = static_cast<std::size_t>(n_max);
  cm.partials.value.resize(orders);
  cm.partials.volume.resize(orders);
  cm.partials.past_value.resize(orders);
  cm.members.resize(n_max);

  const double len = static_cast<double>(length);
  for (int m = 1; m <= n_max; ++m) {
    const auto k = static_cast<std::size_t>(m - 1);
    const auto& cols = members[k];
    cm.members(m - 1) = static_cast<int>(cols.size());

    // Step-major: per-step collective sums, then the window total.
    for (Index i = first; i < first + length; ++i) {
      for (Index q : cols) {
        cm.partials.value[k].add(checked_power(panel.value(i, q), m));
        cm.partials.volume[k].add(checked_power(panel.volume(i, q), m));
        if (cm.has_returns) cm.partials.past_value[k].add(checked_power(panel.price(i - xi, q) * panel.volume(i, q), m));
      }
    }

    // Company-major: each member's own window average, then the sum over members.
    NeumaierSum<double> c_avg, u_avg, s_avg;
    for (Index q : cols) {
      ExactSum c, u, s;
      for (Index i = first; i < first + length; ++i) {
        c.add(checked_power(panel.value(i, q), m));
        u.add(checked_power(panel.volume(i, q), m));
        if (cm.has_returns) s.add(checked_power(panel.price(i - xi, q) * panel.volume(i, q), m));
      }
      c_avg.add(c.value() / len);
      u_avg.add(u.value() / len);
      s_avg.add(s.value() / len);
    }
    double gap = std::max(relative_gap(cm.partials.value[k].value() / len, c_avg.value()),
                          relative_gap(cm.partials.volume[k].value() / len, u_avg.value()));
    if (cm.has_returns) gap = std::max(gap, relative_gap(cm.partials.past_value[k].value() / len, s_avg.value()));
    cm.interchange_deviation = std::max(cm.interchange_deviation, gap);
  }
  finalize_from_partials(cm, n_max);
  return cm;
}

double portfolio_ratio(const DensePanel& panel, const std::vector<Index>& cols, Index first, Index length,
                       Index xi) {
  if (first - xi < 0) return kNaN;
  NeumaierSum<double> value_total, past_total;
  for (Index q : cols) {
    NeumaierSum<double> value_q, past_q;
    for (Index i = first; i < first + length; ++i) {
      value_q.add(panel.value(i, q));
      past_q.add(panel.price(i - xi, q) * panel.volume(i, q));
    }
    value_total.add(value_q.value());
    past_total.add(past_q.value());
  }
  if (!(past_total.value() > 0.0)) throw NumericError("degenerate portfolio past value");
  return value_total.value() / past_total.value();
}

}  // namespace

std::string render_cell(const CellKey& key) {
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i > 0) out += '/';
    out += std::to_string(key[i]);
  }
  return out;
}

RiskCellGrid::RiskCellGrid(double side, int risks, int orders) : side_(side), risks_(risks), orders_(orders) {
  if (!(side > 0.0) || side > 1.0 || !std::isfinite(side)) throw InputError("cell side d must lie in (0, 1]");
  if (risks < 1) throw InputError("number of risks J must be positive");
  if (orders < 1) throw InputError("number of moment orders must be positive");
  Index cells = static_cast<Index>(std::ceil(1.0 / side));
  while (cells > 1 && static_cast<double>(cells - 1) * side >= 1.0) --cells;
  while (static_cast<double>(cells) * side < 1.0) ++cells;
  cells_per_axis_ = cells;
  cell_by_company_.resize(static_cast<std::size_t>(orders));
  members_.resize(static_cast<std::size_t>(orders));
}

Index RiskCellGrid::axis_cell(double coord) const {
  if (!(coord >= 0.0 && coord <= 1.0)) throw InputError("risk coordinate outside [0,1]");
  auto c = static_cast<Index>(std::floor(coord / side_));
  while (c > 0 && static_cast<double>(c) * side_ > coord) --c;
  while (static_cast<double>(c + 1) * side_ <= coord) ++c;
  return std::min(c, cells_per_axis_ - 1);
}

void RiskCellGrid::place(const std::string& company, const Matrix<double>& coords) {
  if (coords.rows() < orders_ || coords.cols() < risks_) {
    throw InputError("company " + company + " has a " + std::to_string(coords.rows()) + "x" +
                     std::to_string(coords.cols()) + " risk matrix; need at least " + std::to_string(orders_) +
                     "x" + std::to_string(risks_));
  }
  for (int m = 0; m < orders_; ++m) {
    const auto k = static_cast<std::size_t>(m);
    if (cell_by_company_[k].count(company)) throw InputError("company " + company + " placed twice");
    CellKey key(static_cast<std::size_t>(risks_));
    for (int j = 0; j < risks_; ++j) {
      try {
        key[static_cast<std::size_t>(j)] = axis_cell(coords(m, j));
      } catch (const InputError&) {
        throw InputError("company " + company + " coordinate m=" + std::to_string(m + 1) +
                         " j=" + std::to_string(j + 1) + " outside [0,1]");
      }
    }
    auto& list = members_[k][key];
    list.insert(std::upper_bound(list.begin(), list.end(), company), company);
    cell_by_company_[k].emplace(company, std::move(key));
  }
}

const CellKey* RiskCellGrid::cell_of(std::string_view company, int m) const {
  if (m < 1 || m > orders_) return nullptr;
  const auto& index = cell_by_company_[static_cast<std::size_t>(m - 1)];
  const auto it = index.find(company);
  return it == index.end() ? nullptr : &it->second;
}

std::vector<std::string> RiskCellGrid::members(const CellKey& cell, int m) const {
  if (m < 1 || m > orders_) return {};
  const auto& index = members_[static_cast<std::size_t>(m - 1)];
  const auto it = index.find(cell);
  return it == index.end() ? std::vector<std::string>{} : it->second;
}

std::vector<CellKey> RiskCellGrid::occupied_cells() const {
  std::set<CellKey> all;
  for (const auto& per_order : members_) {
    for (const auto& [key, list] : per_order) all.insert(key);
  }
  return {all.begin(), all.end()};
}

std::vector<CellKey> RiskCellGrid::occupied_cells(int m) const {
  std::vector<CellKey> out;
  if (m < 1 || m > orders_) return out;
  for (const auto& [key, list] : members_[static_cast<std::size_t>(m - 1)]) out.push_back(key);
  return out;
}

std::vector<std::string> RiskCellGrid::companies() const {
  std::vector<std::string> out;
  if (cell_by_company_.empty()) return out;
  for (const auto& [name, key] : cell_by_company_.front()) out.push_back(name);
  return out;
}

RiskCellGrid assign_cells(const std::vector<RiskVector>& risks, double side, int J, int n_max) {
  RiskCellGrid grid(side, J, n_max);
  for (const auto& rv : risks) grid.place(rv.company, rv.coords);
  return grid;
}

void AggregationConfig::validate() const {
  if (ticks_per_window < 1) throw InputError("ticks per window N must be at least 1");
  if (k_x < 1) throw InputError("k_x must be at least 1");
  if (k_m < 1) throw InputError("k_m must be at least 1");
  if (xi_steps < 0) throw InputError("return shift xi must be non-negative");
  if (n_max < 1) throw InputError("n_max must be at least 1");
}

TickSums collective_tick_sums(const DensePanel& panel, const RiskCellGrid& grid, const CellKey& cell, Index step,
                              Index xi_steps, int m) {
  if (step < 0 || step >= panel.steps()) throw InputError("step outside the series");
  if (xi_steps < 0) throw InputError("return shift xi must be non-negative");
  if (m < 1 || m > grid.orders()) throw InputError("moment order outside the grid");
  TickSums sums;
  sums.has_past = step - xi_steps >= 0;
  ExactSum c, u, s;
  for (const auto& name : grid.members(cell, m)) {
    const Index q = panel.column(name);
    if (q < 0) continue;
    ++sums.members;
    c.add(checked_power(panel.value(step, q), m));
    u.add(checked_power(panel.volume(step, q), m));
    if (sums.has_past) s.add(checked_power(panel.price(step - xi_steps, q) * panel.volume(step, q), m));
  }
  sums.empty = sums.members == 0;
  sums.value = c.value();
  sums.volume = u.value();
  sums.past_value = s.value();
  return sums;
}

std::vector<CollectiveMoments> collective_moments(const DensePanel& panel, const RiskCellGrid& grid,
                                                  const CellKey& cell, const AggregationConfig& cfg) {
  cfg.validate();
  const Index length = cfg.cell_window();
  if (panel.steps() < length) {
    throw InputError("series has " + std::to_string(panel.steps()) + " steps, shorter than the cell window " +
                     std::to_string(length));
  }
  const auto members = member_columns(panel, grid, cell, cfg.n_max);
  std::vector<CollectiveMoments> out;
  for (Index k = 0; (k + 1) * length <= panel.steps(); ++k) {
    out.push_back(accumulate_window(panel, members, k, k * length, length, cfg.xi_steps, cfg.n_max));
    out.back().cell = cell;
  }
  return out;
}

namespace {

MomentVector guarded_ratio(const CollectiveMoments& cm, const MomentVector& num, const MomentVector& den,
                           const char* what) {
  MomentVector out = MomentVector::Constant(num.size(), kNaN);
  for (Index m = 0; m < num.size(); ++m) {
    if (cm.members(m) == 0 || std::isnan(den(m))) continue;
    if (!(den(m) > 0.0)) throw NumericError(std::string(what) + " at m=" + std::to_string(m + 1));
    out(m) = num(m) / den(m);
  }
  return out;
}

}  // namespace

MomentVector collective_return(const CollectiveMoments& cm) {
  if (!cm.has_returns) return MomentVector::Constant(cm.value.size(), kNaN);
  return guarded_ratio(cm, cm.value, cm.past_value, "degenerate past value");
}

MomentVector collective_price(const CollectiveMoments& cm) {
  return guarded_ratio(cm, cm.value, cm.volume, "degenerate volume");
}

RawSums raw_sums(const CollectiveMoments& cm) { return {cm.value_sum, cm.volume_sum, cm.past_value_sum}; }

double markowitz_portfolio_return(const DensePanel& panel, const RiskCellGrid& grid, const CellKey& cell,
                                  const AggregationConfig& cfg, Index time_index) {
  cfg.validate();
  const Index length = cfg.cell_window();
  const Index first = time_index * length;
  if (time_index < 0 || first + length > panel.steps()) throw InputError("cell window outside the series");
  const auto members = member_columns(panel, grid, cell, 1);
  if (members.front().empty()) throw NumericError("degenerate portfolio: empty cell");
  return portfolio_ratio(panel, members.front(), first, length, cfg.xi_steps);
}

std::vector<CollectiveMoments> market_moments(const DensePanel& panel, const AggregationConfig& cfg) {
  cfg.validate();
  const Index length = cfg.market_window();
  if (panel.steps() < length) {
    throw InputError("series has " + std::to_string(panel.steps()) + " steps, shorter than the market window " +
                     std::to_string(length));
  }
  const auto members = all_columns(panel, cfg.n_max);
  std::vector<CollectiveMoments> out;
  for (Index k = 0; (k + 1) * length <= panel.steps(); ++k) {
    out.push_back(accumulate_window(panel, members, k, k * length, length, cfg.xi_steps, cfg.n_max));
  }
  return out;
}

std::vector<CollectiveMoments> market_from_cells(const std::vector<std::vector<CollectiveMoments>>& cells,
                                                 const AggregationConfig& cfg) {
  cfg.validate();
  std::vector<CollectiveMoments> out;
  if (cells.empty()) return out;
  const auto orders = static_cast<std::size_t>(cfg.n_max);
  const Index windows = static_cast<Index>(cells.front().size()) / cfg.k_m;
  for (Index k = 0; k < windows; ++k) {
    CollectiveMoments cm;
    cm.time_index = k;
    cm.first_step = k * cfg.market_window();
    cm.length = cfg.market_window();
    cm.has_returns = cm.first_step - cfg.xi_steps >= 0;
    cm.partials.value.resize(orders);
    cm.partials.volume.resize(orders);
    cm.partials.past_value.resize(orders);
    cm.members = Eigen::VectorXi::Zero(cfg.n_max);
    for (const auto& series : cells) {
      if (static_cast<Index>(series.size()) < (k + 1) * cfg.k_m) throw InputError("cells cover different spans");
      cm.members += series[static_cast<std::size_t>(k * cfg.k_m)].members;
      for (Index t = k * cfg.k_m; t < (k + 1) * cfg.k_m; ++t) {
        const auto& part = series[static_cast<std::size_t>(t)].partials;
        for (std::size_t m = 0; m < orders; ++m) {
          cm.partials.value[m].merge(part.value[m]);
          cm.partials.volume[m].merge(part.volume[m]);
          if (cm.has_returns) cm.partials.past_value[m].merge(part.past_value[m]);
        }
      }
    }
    finalize_from_partials(cm, cfg.n_max);
    out.push_back(std::move(cm));
  }
  return out;
}

Aggregation aggregate(const DensePanel& panel, const RiskCellGrid& grid, const AggregationConfig& cfg) {
  cfg.validate();
  for (const auto& name : panel.companies) {
    if (grid.cell_of(name, 1) == nullptr) throw InputError("company " + name + " has no risk coordinates");
  }
  Aggregation agg;
  for (const auto& cell : grid.occupied_cells()) {
    auto series = collective_moments(panel, grid, cell, cfg);
    const auto members = member_columns(panel, grid, cell, 1);
    for (auto& cm : series) {
      if (cm.has_returns && !members.front().empty()) {
        cm.markowitz_return = portfolio_ratio(panel, members.front(), cm.first_step, cm.length, cfg.xi_steps);
      }
    }
    agg.cells.push_back(std::move(series));
  }
  agg.market = market_moments(panel, cfg);
  const auto everyone = all_columns(panel, 1);
  for (auto& cm : agg.market) {
    if (cm.has_returns) {
      cm.markowitz_return = portfolio_ratio(panel, everyone.front(), cm.first_step, cm.length, cfg.xi_steps);
    }
  }
  return agg;
}

namespace {

void append_level(std::string& out, const CollectiveMoments& cm) {
  const std::string prefix = std::string(cm.is_market() ? "market" : "cell") + ',' +
                             (cm.is_market() ? std::string("-") : render_cell(*cm.cell)) + ',' +
                             std::to_string(cm.time_index) + ',';
  auto row = [&](const char* kind, Index m, double v) {
    if (std::isnan(v)) return;
    out += prefix;
    out += kind;
    out += ',';
    out += std::to_string(m + 1);
    out += ',';
    out += format_double(v);
    out += '\n';
  };
  for (Index m = 0; m < cm.value.size(); ++m) {
    row("C", m, cm.value(m));
    row("U", m, cm.volume(m));
    row("S", m, cm.past_value(m));
    row("r", m, cm.ret(m));
    row("p", m, cm.price(m));
    row("C_sigma", m, cm.value_sum(m));
    row("U_sigma", m, cm.volume_sum(m));
    row("S_sigma", m, cm.past_value_sum(m));
    row("count", m, cm.members(m));
  }
  if (!std::isnan(cm.markowitz_return)) {
    row("markowitz_r", 0, cm.markowitz_return);
    row("markowitz_dev", 0, relative_gap(cm.ret(0), cm.markowitz_return));
  }
}

}  // namespace

std::string write_aggregate_csv(const Aggregation& agg) {
  std::string out = "level,cell,time_index,kind,m,value\n";
  for (const auto& series : agg.cells) {
    for (const auto& cm : series) append_level(out, cm);
  }
  for (const auto& cm : agg.market) append_level(out, cm);
  return out;
}

}  // namespace mbstat
