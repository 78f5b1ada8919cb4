#include "toxflow/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "toxflow/csv.hpp"
#include "toxflow/errors.hpp"

namespace toxflow {

void StrategyConfig::validate() const {
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) {
    throw ConfigError("strategy: cutoff must lie in [0,1]");
  }
  if (!(aversion >= 0.0)) throw ConfigError("strategy: aversion must be >= 0");
  if (horizon <= 0) throw ConfigError("strategy: horizon must be positive");
  if (!(fee_per_notional >= 0.0)) throw ConfigError("strategy: fee must be >= 0");
}

Decision decide(double p, Side side, double q_inventory, const StrategyConfig& cfg) {
  const double tilt = cfg.aversion * q_inventory;
  const double threshold = side == Side::Buy ? cfg.cutoff + tilt : cfg.cutoff - tilt;
  return threshold > p ? Decision::Internalise : Decision::Externalise;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BacktestLedger run_backtest(const Tape& tape, const std::vector<double>& predictions,
                            const StrategyConfig& cfg) {
  cfg.validate();
  if (predictions.size() != tape.trades.size()) {
    throw DataError("backtest: predictions must align one-to-one with trades");
  }

  BacktestLedger ledger;
  ledger.day_id = tape.day_id;
  {
    std::vector<double> qtys;
    qtys.reserve(tape.trades.size());
    for (const auto& tr : tape.trades) qtys.push_back(tr.qty);
    ledger.median_qty = median(std::move(qtys));
  }

  struct Unwind {
    Micros ts;
    double dq;  // signed normalized size restoring the book to flat
  };
  std::deque<Unwind> unwinds;  // trades arrive in ts order, so ts+g stays sorted
  double q = 0;

  const Micros t_end = tape.session_end();
  for (std::size_t i = 0; i < tape.trades.size(); ++i) {
    const TradeEvent& tr = tape.trades[i];
    while (!unwinds.empty() && unwinds.front().ts <= tr.ts) {
      q += unwinds.front().dq;
      unwinds.pop_front();
    }

    const Quote* entry = tape.prevailing_quote(tr.ts);
    if (!entry) throw DataError("backtest: trade before first quote");
    const Micros unwind_ts = std::min(tr.ts + cfg.horizon, t_end);
    const bool flagged = tr.ts + cfg.horizon > t_end;
    const Quote* exitq = tape.prevailing_quote(unwind_ts);

    // Crossing the spread: a client buy leaves the broker short at the entry
    // ask, bought back at the later ask; a client sell leaves her long at
    // the entry bid, sold at the later bid. Prices are integer micro-units.
    double pnl_micro;
    if (tr.side == Side::Buy) {
      pnl_micro = tr.qty * static_cast<double>(entry->ask - exitq->ask);
    } else {
      pnl_micro = tr.qty * static_cast<double>(exitq->bid - entry->bid);
    }
    const double entry_px =
        tr.side == Side::Buy ? static_cast<double>(entry->ask)
                             : static_cast<double>(entry->bid);
    double pnl = 1e-6 * pnl_micro;
    pnl -= cfg.fee_per_notional * tr.qty * 1e-6 * entry_px;

    const Decision d = decide(predictions[i], tr.side, q, cfg);
    BacktestRow row;
    row.ts = tr.ts;
    row.client = tr.client;
    row.side = tr.side;
    row.qty = tr.qty;
    row.p = predictions[i];
    row.internalised = d == Decision::Internalise;
    row.pnl_usd = pnl;
    row.flagged = flagged;

    ledger.total_volume_qty += tr.qty;
    if (row.internalised) {
      const double dq = tr.qty / ledger.median_qty;
      if (tr.side == Side::Buy) {
        q -= dq;  // broker sold base currency to the client
        unwinds.push_back({unwind_ts, +dq});
      } else {
        q += dq;
        unwinds.push_back({unwind_ts, -dq});
      }
      ledger.total_pnl_usd += pnl;
      ledger.internalised_volume_qty += tr.qty;
      ++ledger.n_internalised;
    } else {
      ledger.total_avoided_pnl_usd += pnl;
      if (pnl < 0) ledger.total_avoided_loss_usd -= pnl;
    }
    row.q_after = q;
    ledger.rows.push_back(row);
  }
  ledger.internalised_volume_pct =
      ledger.total_volume_qty > 0
          ? 100.0 * ledger.internalised_volume_qty / ledger.total_volume_qty
          : 0.0;
  return ledger;
}

void write_ledger_csv(const std::string& path, const Tape& tape,
                      const BacktestLedger& ledger) {
  CsvWriter w(path, "ts_us,client_id,side,qty,p,decision,pnl_usd,q_after,flagged");
  for (const auto& r : ledger.rows) {
    w.write_row({std::to_string(r.ts), tape.clients.at(r.client),
                 r.side == Side::Buy ? "B" : "S", format_f64(r.qty), format_f64(r.p),
                 r.internalised ? "I" : "E", format_f64(r.pnl_usd),
                 format_f64(r.q_after), r.flagged ? "1" : "0"});
  }
  w.close();
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  CsvWriter w(path,
              "model,horizon_us,cutoff,aversion,pnl_usd,avoided_loss_usd,"
              "internalised_vol_pct");
  for (const auto& r : rows) {
    w.write_row({r.model, std::to_string(r.horizon_us), format_f64(r.cutoff),
                 format_f64(r.aversion), format_f64(r.pnl_usd),
                 format_f64(r.avoided_loss_usd),
                 format_f64(r.internalised_vol_pct)});
  }
  w.close();
}

}  // namespace toxflow
