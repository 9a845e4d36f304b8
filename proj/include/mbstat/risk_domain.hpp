#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mbstat/summation.hpp"
#include "mbstat/trade_data.hpp"
#include "mbstat/types.hpp"

namespace mbstat {

/// Per-axis cell indices of one cell in [0,1]^J.
using CellKey = std::vector<Index>;

/// Renders a key as `/`-joined indices, e.g. "0/3".
std::string render_cell(const CellKey& key);

/// Cubic cells of side d tiling [0,1]^J. Along each axis cell c covers
/// [c*d, (c+1)*d) evaluated in double arithmetic; the last cell also holds 1.
/// Companies are placed separately for every moment order m, because the
/// order-m collective sums use the order-m coordinates. Only occupied cells
/// are stored.
class RiskCellGrid {
 public:
  RiskCellGrid(double side, int risks, int orders);

  double side() const { return side_; }
  int risks() const { return risks_; }
  int orders() const { return orders_; }
  Index cells_per_axis() const { return cells_per_axis_; }

  /// Cell index along one axis for a coordinate in [0,1].
  Index axis_cell(double coord) const;

  /// Places `company` using rows 0..orders-1 and columns 0..risks-1 of coords.
  void place(const std::string& company, const Matrix<double>& coords);

  /// Cell of `company` at 1-based order m, or nullptr when unplaced.
  const CellKey* cell_of(std::string_view company, int m) const;
  /// Sorted members of `cell` at order m.
  std::vector<std::string> members(const CellKey& cell, int m) const;
  /// Cells holding at least one company at any order, sorted.
  std::vector<CellKey> occupied_cells() const;
  std::vector<CellKey> occupied_cells(int m) const;
  std::vector<std::string> companies() const;

 private:
  double side_;
  int risks_;
  int orders_;
  Index cells_per_axis_;
  // Index m-1: company -> cell, cell -> sorted members.
  std::vector<std::map<std::string, CellKey, std::less<>>> cell_by_company_;
  std::vector<std::map<CellKey, std::vector<std::string>>> members_;
};

/// Validates coordinates and builds the grid for the first n_max orders and
/// first J risks of every risk vector.
RiskCellGrid assign_cells(const std::vector<RiskVector>& risks, double side, int J, int n_max);

struct AggregationConfig {
  /// Ticks per single-company window (N).
  Index ticks_per_window = 1;
  /// Cell windows span k_x * N steps; market windows k_m * k_x * N steps.
  Index k_x = 1;
  Index k_m = 1;
  Index xi_steps = 0;
  int n_max = 1;

  Index cell_window() const { return k_x * ticks_per_window; }
  Index market_window() const { return k_m * k_x * ticks_per_window; }
  void validate() const;
};

/// Sums over the companies of one cell at one step and order.
struct TickSums {
  double value = 0.0;       // sum_q C^m
  double volume = 0.0;      // sum_q U^m
  double past_value = 0.0;  // sum_q S^m, 0 without a past
  Index members = 0;
  bool empty = true;
  bool has_past = false;
};

/// Collective quantities of one cell (or the whole market) over one window.
struct CollectiveMoments {
  /// Unset for whole-market rows.
  std::optional<CellKey> cell;
  Index time_index = 0;
  Index first_step = 0;
  /// Window length in steps; the averages divide the raw sums by it.
  Index length = 0;
  bool has_returns = false;

  // Averages over the window of the per-step collective sums.
  MomentVector value;
  MomentVector volume;
  MomentVector past_value;
  // Ratios; NaN where the cell is empty at that order or has no past.
  MomentVector ret;
  MomentVector price;
  // Raw sums over the window and over member companies.
  MomentVector value_sum;
  MomentVector volume_sum;
  MomentVector past_value_sum;
  /// Contributing companies per order.
  Eigen::VectorXi members;
  /// Largest relative gap between the step-major and company-major averages.
  double interchange_deviation = 0.0;
  /// Direct portfolio-return ratio at m = 1 (NaN without a past).
  double markowitz_return = std::numeric_limits<double>::quiet_NaN();

  /// Exact accumulators behind the raw sums; merging them is lossless.
  struct Partials {
    std::vector<ExactSum> value, volume, past_value;
  } partials;

  bool is_market() const { return !cell.has_value(); }
  bool empty(int m) const { return members(m - 1) == 0; }
};

TickSums collective_tick_sums(const DensePanel& panel, const RiskCellGrid& grid, const CellKey& cell, Index step,
                              Index xi_steps, int m);

/// Cell moments on the grid of k_x * N step windows.
std::vector<CollectiveMoments> collective_moments(const DensePanel& panel, const RiskCellGrid& grid,
                                                  const CellKey& cell, const AggregationConfig& cfg);

/// r = C / S per order. NaN for empty orders; throws NumericError when a
/// populated order has S <= 0.
MomentVector collective_return(const CollectiveMoments& cm);
/// p = C / U per order, same conventions.
MomentVector collective_price(const CollectiveMoments& cm);

struct RawSums {
  MomentVector value;
  MomentVector volume;
  MomentVector past_value;
};
RawSums raw_sums(const CollectiveMoments& cm);

/// Portfolio return at m = 1 from per-company totals over the cell window
/// `time_index`: sum_q sum_i C / sum_q sum_i S.
double markowitz_portfolio_return(const DensePanel& panel, const RiskCellGrid& grid, const CellKey& cell,
                                  const AggregationConfig& cfg, Index time_index);

/// Whole-market moments on the grid of k_m * k_x * N step windows, summed
/// directly over all companies.
std::vector<CollectiveMoments> market_moments(const DensePanel& panel, const AggregationConfig& cfg);

/// Whole-market moments reduced from cell results: every cell's partials
/// over k_m consecutive cell windows, merged in cell-key order.
std::vector<CollectiveMoments> market_from_cells(const std::vector<std::vector<CollectiveMoments>>& cells,
                                                 const AggregationConfig& cfg);

struct Aggregation {
  std::vector<std::vector<CollectiveMoments>> cells;  // per occupied cell, sorted by key
  std::vector<CollectiveMoments> market;
};

/// Cell and market levels, with the Markowitz oracle filled at both.
Aggregation aggregate(const DensePanel& panel, const RiskCellGrid& grid, const AggregationConfig& cfg);

/// Aggregate CSV: `level,cell,time_index,kind,m,value`.
std::string write_aggregate_csv(const Aggregation& agg);

}  // namespace mbstat
