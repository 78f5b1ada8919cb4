#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "toxflow/labeler.hpp"
#include "toxflow/market_data.hpp"

namespace toxflow {

// ============================================================================
// Feature vectors
//
// Each client trade is described by 183 values computed from history strictly
// before the trade (the prevailing quote at trade.ts counts as history;
// the trade itself does not).
//
// Layout:
//   f0..f14   state features
//     0  signed_log(client cash, quote ccy)
//     1  signed_log(client inventory, lots of 10k base units)
//     2  order quantity (base units)
//     3  prevailing spread
//     4  prevailing book imbalance
//     5  log(1+|bid resting volume|)
//     6  log(1+|ask resting volume|)
//     7  prevailing ask
//     8  prevailing bid
//     9  prevailing mid
//     10 quote updates since the start date
//     11 trades by this client since the start date
//     12 trades by all clients since the start date
//     13 expanding realized volatility since the start date
//     14 share of this client's resolved past trades that were toxic
//   f15..f182 clock features, clock-major / interval-minor / stat-innermost:
//     clocks     time (unit 1s), transaction (unit 1 trade), volume (unit
//                2,000 base units); transaction and volume clocks restart
//                each day, the time clock is the intraday timestamp
//     intervals  distance d back from now: [0,Y), [Y,2Y), [2Y,4Y), [4Y,8Y),
//                [8Y,16Y), [16Y,32Y), [32Y,64Y)
//     stats      (a) realized vol of mid over quotes in the interval
//                (b) trades by this client in the interval
//                (c) quote updates in the interval
//                (d) log mid return across the interval
//                (e) mean log(1+bid volume) over quotes in the interval
//                (f) mean log(1+ask volume) over quotes in the interval
//                (g) mean spread over quotes in the interval
//                (h) mean imbalance over quotes in the interval
//     Every statistic of an empty interval is 0.
//
// Counters (f10..f12), client cash/inventory, the expanding volatility and
// the toxic-share feature persist across days; quote-derived state and the
// interval buffers reset at the session boundary. The toxic share uses only
// labels whose resolution time is strictly before the current trade.
// ============================================================================

inline constexpr int kStateFeatures = 15;
inline constexpr int kClocks = 3;
inline constexpr int kIntervals = 7;
inline constexpr int kStats = 8;
inline constexpr int kFeaturesPerClock = kIntervals * kStats;  // 56
inline constexpr int kFullFeatureDim =
    kStateFeatures + kClocks * kFeaturesPerClock;  // 183

enum class ClockKind : int { Time = 0, Transaction = 1, Volume = 2 };

struct FeatureConfig {
  std::optional<ClockKind> clock_ablation;  // keep only this clock's features
  bool client_features = true;  // off: zero cash/inventory/activity features
  double lot_size = 10'000.0;
  double volume_unit = 2'000.0;        // volume-clock unit, base units
  Micros time_unit = 1'000'000;        // time-clock unit

  int dim() const {
    return kStateFeatures + (clock_ablation ? 1 : kClocks) * kFeaturesPerClock;
  }
};

// sign(v) * log(1 + |v|)
inline double signed_log(double v) {
  return v >= 0 ? std::log1p(v) : -std::log1p(-v);
}

// sqrt of the sum of squared log increments between consecutive mids.
double realized_vol(const std::vector<double>& mids);

struct FeatureRow {
  int day_id = 0;
  Micros ts = 0;
  std::uint32_t client = 0;
  Side side = Side::Buy;
  double qty = 0;
  std::vector<double> x;
};

// Streaming featurizer. The caller feeds one day at a time in event order:
// begin_day, then quotes and trades merged by ts with quotes first on ties;
// for each trade call features_for before apply_trade. Labels ride along
// with trades and unlock (for the toxic-share feature) once their
// resolution time passes.
class Featurizer {
 public:
  Featurizer(FeatureConfig cfg, std::size_t n_clients);

  void begin_day(int day_id);
  void end_day();  // flushes pending label resolutions
  void on_quote(const Quote& q);
  std::vector<double> features_for(const TradeEvent& trade);
  void apply_trade(const TradeEvent& trade, const Label& label);

  const FeatureConfig& config() const { return cfg_; }

 private:
  struct QuoteEv {
    Micros ts;
    std::int64_t txn_pos;
    double vol_pos;
    double log_mid;
    double d2;  // squared log increment vs previous quote, 0 for day's first
    double spread, imb, tv_bid, tv_ask;
  };
  struct TradeEv {
    Micros ts;
    std::int64_t txn_pos;
    double vol_pos;
    std::uint32_t client;
  };
  struct PendingLabel {
    Micros resolved_ts;
    std::uint32_t client;
    bool y;
  };
  struct ClientState {
    double cash = 0;       // quote currency
    double inv_lots = 0;   // base units / lot_size
    std::int64_t n_trades = 0;
    std::int64_t resolved = 0;
    std::int64_t sharp = 0;
  };

  void release_labels(Micros now_strict_before);
  void evict();
  // Newest quote with clock position <= coord; nullopt when none was ever
  // seen at or before that coordinate this day.
  std::optional<double> log_mid_at(ClockKind c, double coord) const;
  double quote_pos(const QuoteEv& e, ClockKind c) const;

  FeatureConfig cfg_;
  std::vector<ClientState> clients_;
  std::deque<QuoteEv> quotes_;
  std::deque<TradeEv> trades_;
  std::deque<PendingLabel> pending_;

  // day-local
  int day_id_ = -1;
  Micros now_ts_ = 0;
  std::int64_t day_txns_ = 0;
  double day_vol_ = 0;
  bool has_quote_ = false;
  Quote last_quote_{};
  double prev_log_mid_ = 0;
  std::array<double, kClocks> anchor_log_mid_{};
  std::array<bool, kClocks> has_anchor_{};

  // global (persist across days)
  std::int64_t total_quotes_ = 0;
  std::int64_t total_trades_ = 0;
  double expanding_sumsq_ = 0;
};

// Drives a Featurizer over whole sessions. labels[i] must align with
// tapes[i].trades. n_clients covers all tapes (shared registry).
std::vector<FeatureRow> featurize_tapes(const std::vector<Tape>& tapes,
                                        const std::vector<std::vector<Label>>& labels,
                                        const FeatureConfig& cfg,
                                        std::size_t n_clients);

// Debug dump: ts_us,client_id,side,f0..f<dim-1>
void write_features_csv(const std::vector<FeatureRow>& rows,
                        const std::vector<std::string>& clients,
                        const std::string& path);

}  // namespace toxflow
