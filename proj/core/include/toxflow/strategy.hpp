#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toxflow/market_data.hpp"

namespace toxflow {

// ============================================================================
// Internalise/externalise decision rule and backtest accounting.
//
// The broker internalises a client trade when the predicted toxicity is
// below a cutoff tilted by her inventory: client buys when
// cutoff + aversion*Q > p, client sells when cutoff - aversion*Q > p, both
// strict (exact equality externalises). Internalised trades are unwound by
// crossing the spread at the prevailing quote one horizon later; the same
// counterfactual is tracked for externalised trades so every trade's PnL
// lands in exactly one bucket and the two buckets always sum to the
// decision-free total.
// ============================================================================

struct StrategyConfig {
  double cutoff = 0.5;           // decision threshold on predicted toxicity
  double aversion = 0.0;         // inventory tilt per unit of (normalized) Q
  Micros horizon = 30'000'000;   // unwind delay, microseconds
  double fee_per_notional = 0;   // charged on the entry notional when internalising

  void validate() const;  // cutoff in [0,1], aversion >= 0, horizon > 0
};

enum class Decision { Internalise, Externalise };

// q_inventory is the broker's base-currency position in median-trade-size
// units (positive = long).
Decision decide(double p, Side side, double q_inventory, const StrategyConfig& cfg);

struct BacktestRow {
  Micros ts = 0;
  std::uint32_t client = 0;
  Side side = Side::Buy;
  double qty = 0;
  double p = 0;
  bool internalised = false;
  double pnl_usd = 0;   // realized if internalised, else the counterfactual
  double q_after = 0;   // normalized inventory right after the fill
  bool flagged = false; // unwind fell past the last quote (session end)
};

struct BacktestLedger {
  std::vector<BacktestRow> rows;
  int day_id = 0;
  double median_qty = 0;            // normalizer for the inventory term
  double total_pnl_usd = 0;         // realized, internalised trades only
  double total_avoided_pnl_usd = 0; // counterfactual, externalised trades
  double total_avoided_loss_usd = 0;  // -(negative part) of the counterfactuals
  double total_volume_qty = 0;
  double internalised_volume_qty = 0;
  double internalised_volume_pct = 0;
  std::size_t n_internalised = 0;
};

// Single-session backtest. predictions[i] scores tape.trades[i]; the broker
// starts flat, entry prices are the prevailing quote at the fill, and each
// internalised position is unwound at ts + horizon (at the last quote,
// flagged, when the session ends first). Pending unwinds at or before an
// arrival are applied to Q before deciding: the broker always knows her own
// book. Fees are charged on entry notional, identically in the
// counterfactual bucket.
BacktestLedger run_backtest(const Tape& tape, const std::vector<double>& predictions,
                            const StrategyConfig& cfg);

// ============================================================================
// Artifacts
// ============================================================================

// header: ts_us,client_id,side,qty,p,decision,pnl_usd,q_after,flagged
void write_ledger_csv(const std::string& path, const Tape& tape,
                      const BacktestLedger& ledger);

struct SweepRow {
  std::string model;
  std::int64_t horizon_us = 0;
  double cutoff = 0;
  double aversion = 0;
  double pnl_usd = 0;
  double avoided_loss_usd = 0;
  double internalised_vol_pct = 0;
};
// header: model,horizon_us,cutoff,aversion,pnl_usd,avoided_loss_usd,internalised_vol_pct
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace toxflow
