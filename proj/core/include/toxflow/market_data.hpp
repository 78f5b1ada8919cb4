#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace toxflow {

// ============================================================================
// Market data model
//
// One Tape is one trading session (one day) of top-of-book FX quotes plus the
// client trades a broker filled at those quotes. Prices are carried as
// integer micro-units of the quote currency (1e-6 USD for EUR/USD), so CSV
// round-trips are exact; they are converted to doubles only at the numeric
// boundary (features, PnL).
// ============================================================================

using Micros = std::int64_t;      // microseconds since session start
using PriceMicro = std::int64_t;  // price in 1e-6 quote-currency units

inline constexpr double kPriceScale = 1e-6;

inline double price_to_double(PriceMicro p) { return static_cast<double>(p) * kPriceScale; }

enum class Side : std::uint8_t { Buy, Sell };

inline char side_char(Side s) { return s == Side::Buy ? 'B' : 'S'; }

struct Quote {
  Micros ts = 0;
  PriceMicro bid = 0;
  PriceMicro ask = 0;
  double bid_vol = 0;  // resting volume, base-currency units
  double ask_vol = 0;

  double mid() const { return 0.5 * (price_to_double(bid) + price_to_double(ask)); }
  double spread() const { return price_to_double(ask - bid); }
  // Book-pressure imbalance in [-1, 1]; positive when the bid side is heavier.
  double imbalance() const {
    const double tot = bid_vol + ask_vol;
    return tot > 0 ? (bid_vol - ask_vol) / tot : 0.0;
  }
};

struct TradeEvent {
  Micros ts = 0;
  std::uint32_t client = 0;  // index into Tape::clients
  Side side = Side::Buy;     // client-side: Buy means the client lifted the ask
  double qty = 0;            // base-currency units, > 0
};

struct Tape {
  int day_id = 0;
  std::vector<Quote> quotes;       // ts non-decreasing
  std::vector<TradeEvent> trades;  // ts non-decreasing
  std::vector<std::string> clients;

  // Last quote with quote.ts <= ts (quote-then-trade ordering at equal ts).
  // Null when ts precedes the first quote.
  const Quote* prevailing_quote(Micros ts) const;

  Micros session_end() const { return quotes.empty() ? 0 : quotes.back().ts; }

  // Checks ordering, positivity, crossed books, and that every trade lies
  // inside the quoted span. Throws DataError with a row reference.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct QtyDist {
  enum class Kind { Fixed, Lognormal } kind = Kind::Fixed;
  double value = 2000.0;  // Fixed: qty; Lognormal: unused
  double mu = 0.0;        // Lognormal: log-scale location
  double sigma = 0.0;     // Lognormal: log-scale spread
};

// Tick-grid random-walk midprice whose drift flips sign/zero at Poisson regime
// changes; Poisson quote updates and per-client Poisson trade arrivals.
// A client is "informed" to the extent it trades on the side of the current
// drift. Fully deterministic given (seed, day).
struct SynthConfig {
  std::uint64_t seed = 1;
  int n_days = 1;
  Micros session_len = 3'600'000'000;  // microseconds
  double tick = 1e-6;                  // price increment, multiple of 1e-6
  double base_mid = 1.10;              // day-open mid
  int spread_ticks = 6;                // quoted spread, in ticks
  double quote_rate = 5.0;             // mean quote updates / second
  double drift_regime_rate = 1.0 / 120.0;  // regime switches / second
  double drift_magnitude = 2.5e-7;     // |drift| in price / second
  int n_clients = 8;
  std::vector<double> informedness{0.5};  // per client; size 1 broadcasts
  double trade_rate = 0.05;            // trades / second / client
  QtyDist qty_dist;

  double informedness_for(int client) const;
  void validate() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

// One session; byte-identical output for identical (cfg.seed, day).
Tape generate_tape(const SynthConfig& cfg, int day = 0);
std::vector<Tape> generate_tapes(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// CSV ingestion / persistence
//
// quotes: ts_us,bid,ask,bid_vol,ask_vol        (prices <= 6 fractional digits)
// trades: ts_us,client_id,side,qty             (side in {B, S})
// ---------------------------------------------------------------------------

// `client_registry`, when given, maps client ids to stable indices across
// days: known names resolve to their registry index, new names are appended.
// Without it each tape gets a private first-appearance numbering.
Tape load_tape(const std::string& quotes_path, const std::string& trades_path,
               int day_id = 0, std::vector<std::string>* client_registry = nullptr);
void save_tape_csv(const Tape& tape, const std::string& quotes_path,
                   const std::string& trades_path);

}  // namespace toxflow
