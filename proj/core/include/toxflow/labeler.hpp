#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toxflow/market_data.hpp"

namespace toxflow {

// ============================================================================
// Toxicity labels
//
// A client buy filled at ask a0 is toxic for the broker when some later quote
// inside the horizon shows bid > a0: the broker could only have unwound at a
// loss-making level. Symmetrically a client sell at bid b0 is toxic when some
// later ask < b0. The window is (trade.ts, min(trade.ts + g, T)] with T the
// session's last quote; both price comparisons are strict.
// ============================================================================

struct Horizon {
  Micros g = 30'000'000;  // toxicity horizon in microseconds
};

struct Label {
  bool y = false;                 // toxic?
  Micros resolved_ts = 0;         // min(trade.ts + g, T); when y becomes known
  std::optional<Micros> tau;      // earliest qualifying quote ts, toxic only
  bool censored = false;          // window truncated by session end
};

// Independent single-trade scan; O(window) via binary search.
Label label_trade(const Tape& tape, const TradeEvent& trade, Horizon h);

// One forward sweep over quotes with a pending-trade book; equivalent to
// label_trade per trade, O((quotes + trades) log trades) total.
std::vector<Label> label_tape(const Tape& tape, Horizon h);

struct LabelSummary {
  std::size_t n_trades = 0;
  std::size_t n_toxic = 0;
  std::size_t n_censored = 0;
  std::size_t n_toxic_uncensored = 0;
  std::size_t n_uncensored = 0;

  double toxic_rate_all() const {
    return n_trades ? static_cast<double>(n_toxic) / static_cast<double>(n_trades) : 0.0;
  }
  double toxic_rate_uncensored() const {
    return n_uncensored ? static_cast<double>(n_toxic_uncensored) /
                              static_cast<double>(n_uncensored)
                        : 0.0;
  }
};

LabelSummary summarize_labels(const std::vector<Label>& labels);

// labels CSV: ts_us,client_id,side,horizon_us,y,tau_us,censored
// tau_us is empty for benign trades.
void write_labels_csv(const Tape& tape, const std::vector<Label>& labels,
                      Horizon h, const std::string& path);
std::vector<Label> load_labels_csv(const std::string& path, Horizon h,
                                   const Tape& tape);

}  // namespace toxflow
