#include "toxflow/market_data.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "toxflow/csv.hpp"
#include "toxflow/errors.hpp"
#include "toxflow/rng.hpp"

namespace toxflow {

const Quote* Tape::prevailing_quote(Micros ts) const {
  auto it = std::upper_bound(quotes.begin(), quotes.end(), ts,
                             [](Micros t, const Quote& q) { return t < q.ts; });
  if (it == quotes.begin()) return nullptr;
  return &*(it - 1);
}

void Tape::validate() const {
  if (quotes.empty()) throw DataError("tape: no quotes");
  for (std::size_t i = 0; i < quotes.size(); ++i) {
    const Quote& q = quotes[i];
    const std::string at = "quote " + std::to_string(i);
    if (q.ts < 0) throw DataError(at + ": negative ts");
    if (i > 0 && q.ts < quotes[i - 1].ts) throw DataError(at + ": ts out of order");
    if (q.ask <= q.bid) throw DataError(at + ": crossed book");
    if (!(q.bid_vol > 0) || !(q.ask_vol > 0)) throw DataError(at + ": non-positive volume");
  }
  const Micros t0 = quotes.front().ts;
  const Micros t1 = quotes.back().ts;
  for (std::size_t i = 0; i < trades.size(); ++i) {
    const TradeEvent& tr = trades[i];
    const std::string at = "trade " + std::to_string(i);
    if (i > 0 && tr.ts < trades[i - 1].ts) throw DataError(at + ": ts out of order");
    if (tr.ts < t0 || tr.ts > t1) throw DataError(at + ": outside quoted span");
    if (!(tr.qty > 0)) throw DataError(at + ": non-positive qty");
    if (tr.client >= clients.size()) throw DataError(at + ": unknown client index");
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

double SynthConfig::informedness_for(int client) const {
  if (informedness.empty()) return 0.5;
  if (informedness.size() == 1) return informedness[0];
  return informedness[static_cast<std::size_t>(client) % informedness.size()];
}

void SynthConfig::validate() const {
  if (n_days < 1) throw ConfigError("synth: n_days must be >= 1");
  if (session_len <= 0) throw ConfigError("synth: session_len must be positive");
  if (tick < kPriceScale) throw ConfigError("synth: tick below 1e-6 price resolution");
  const double ticks = tick / kPriceScale;
  if (std::abs(ticks - std::round(ticks)) > 1e-9) {
    throw ConfigError("synth: tick must be a multiple of 1e-6");
  }
  if (spread_ticks < 1) throw ConfigError("synth: spread_ticks must be >= 1");
  if (quote_rate <= 0) throw ConfigError("synth: quote_rate must be positive");
  if (drift_regime_rate < 0) throw ConfigError("synth: drift_regime_rate negative");
  if (n_clients < 1) throw ConfigError("synth: n_clients must be >= 1");
  if (trade_rate < 0) throw ConfigError("synth: trade_rate negative");
  for (double p : informedness) {
    if (p < 0 || p > 1) throw ConfigError("synth: informedness outside [0,1]");
  }
  if (qty_dist.kind == QtyDist::Kind::Fixed && !(qty_dist.value > 0)) {
    throw ConfigError("synth: fixed qty must be positive");
  }
  if (base_mid <= 0) throw ConfigError("synth: base_mid must be positive");
}

namespace {

// Piecewise-constant drift path over one session.
struct RegimePath {
  std::vector<Micros> start;   // segment start times, start[0] == 0
  std::vector<double> drift;   // price per second, one per segment

  double at(Micros ts) const {
    auto it = std::upper_bound(start.begin(), start.end(), ts);
    return drift[static_cast<std::size_t>(it - start.begin()) - 1];
  }
};

RegimePath build_regimes(const SynthConfig& cfg, Rng& rng) {
  RegimePath path;
  auto draw_state = [&] {
    const std::uint64_t k = rng.uniform_int(3);  // {-1, 0, +1} equally likely
    return (static_cast<double>(k) - 1.0) * cfg.drift_magnitude;
  };
  path.start.push_back(0);
  path.drift.push_back(draw_state());
  if (cfg.drift_regime_rate > 0) {
    double t = 0;
    while (true) {
      t += rng.exponential(cfg.drift_regime_rate) * 1e6;
      if (t >= static_cast<double>(cfg.session_len)) break;
      path.start.push_back(static_cast<Micros>(t));
      path.drift.push_back(draw_state());
    }
  }
  return path;
}

double round_to_6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

Tape generate_tape(const SynthConfig& cfg, int day) {
  cfg.validate();
  Tape tape;
  tape.day_id = day;
  for (int c = 0; c < cfg.n_clients; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "C%03d", c);
    tape.clients.emplace_back(buf);
  }

  // Independent substreams so a change in one leg cannot shift another.
  Rng regime_rng(mix_seed(cfg.seed, 1, static_cast<std::uint64_t>(day)));
  Rng quote_rng(mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(day)));
  Rng trade_rng(mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(day)));

  const RegimePath regimes = build_regimes(cfg, regime_rng);

  const PriceMicro tick_micro = static_cast<PriceMicro>(std::llround(cfg.tick / kPriceScale));
  const PriceMicro half_dn = tick_micro * (cfg.spread_ticks / 2);
  const PriceMicro half_up = tick_micro * cfg.spread_ticks - half_dn;
  const PriceMicro floor_mid = tick_micro * (cfg.spread_ticks + 2);
  const double base_vol = 1e5;     // resting size scale, base-currency units
  const double vol_sigma = 0.5;    // lognormal dispersion of resting size
  const double imb_tilt = 0.25;    // drift-aligned book-pressure tilt

  // Quote times: Poisson arrivals, plus an opening and a closing quote.
  std::vector<Micros> quote_ts;
  quote_ts.push_back(0);
  {
    double t = 0;
    while (true) {
      t += quote_rng.exponential(cfg.quote_rate) * 1e6;
      if (t >= static_cast<double>(cfg.session_len)) break;
      quote_ts.push_back(static_cast<Micros>(t));
    }
  }
  quote_ts.push_back(cfg.session_len);
  for (std::size_t i = 1; i < quote_ts.size(); ++i) {  // de-duplicate: +1us jitter
    if (quote_ts[i] <= quote_ts[i - 1]) quote_ts[i] = quote_ts[i - 1] + 1;
  }

  // Latent mid: drift integrated between updates plus a one-tick coin flip,
  // then snapped to the tick grid for quoting.
  double x = cfg.base_mid;
  Micros prev_ts = 0;
  tape.quotes.reserve(quote_ts.size());
  for (std::size_t i = 0; i < quote_ts.size(); ++i) {
    const Micros ts = quote_ts[i];
    if (i > 0) {
      // Integrate drift piecewise across any regime switches in (prev, ts].
      Micros seg = prev_ts;
      while (seg < ts) {
        auto it = std::upper_bound(regimes.start.begin(), regimes.start.end(), seg);
        const Micros seg_end = it == regimes.start.end() ? ts : std::min(ts, *it);
        x += regimes.at(seg) * static_cast<double>(seg_end - seg) * 1e-6;
        seg = seg_end;
      }
      x += (quote_rng.bernoulli(0.5) ? 1.0 : -1.0) * cfg.tick;
    }
    PriceMicro mid = static_cast<PriceMicro>(std::llround(x / cfg.tick)) * tick_micro;
    if (mid < floor_mid) {  // keep the book positive in degenerate configs
      mid = floor_mid;
      x = price_to_double(mid);
    }
    const double drift = regimes.at(ts);
    const double tilt = drift > 0 ? imb_tilt : (drift < 0 ? -imb_tilt : 0.0);
    Quote q;
    q.ts = ts;
    q.bid = mid - half_dn;
    q.ask = mid + half_up;
    q.bid_vol = round_to_6(base_vol * std::exp(tilt) * quote_rng.lognormal(0.0, vol_sigma));
    q.ask_vol = round_to_6(base_vol * std::exp(-tilt) * quote_rng.lognormal(0.0, vol_sigma));
    tape.quotes.push_back(q);
    prev_ts = ts;
  }

  // Client trades: Poisson per client, side drawn against the regime drift
  // with the client's informedness, uniform otherwise.
  const Micros last_quote_ts = tape.quotes.back().ts;
  for (int c = 0; c < cfg.n_clients; ++c) {
    const double inf = cfg.informedness_for(c);
    double t = 0;
    while (cfg.trade_rate > 0) {
      t += trade_rng.exponential(cfg.trade_rate) * 1e6;
      if (t >= static_cast<double>(cfg.session_len)) break;
      TradeEvent tr;
      tr.ts = std::min(static_cast<Micros>(t), last_quote_ts);
      tr.client = static_cast<std::uint32_t>(c);
      const double drift = regimes.at(tr.ts);
      const bool informed = trade_rng.bernoulli(inf) && drift != 0.0;
      if (informed) {
        tr.side = drift > 0 ? Side::Buy : Side::Sell;
      } else {
        tr.side = trade_rng.bernoulli(0.5) ? Side::Buy : Side::Sell;
      }
      switch (cfg.qty_dist.kind) {
        case QtyDist::Kind::Fixed:
          tr.qty = round_to_6(cfg.qty_dist.value);
          break;
        case QtyDist::Kind::Lognormal:
          tr.qty = round_to_6(trade_rng.lognormal(cfg.qty_dist.mu, cfg.qty_dist.sigma));
          break;
      }
      if (tr.qty <= 0) tr.qty = 1e-6;
      tape.trades.push_back(tr);
    }
  }
  std::stable_sort(tape.trades.begin(), tape.trades.end(),
                   [](const TradeEvent& a, const TradeEvent& b) { return a.ts < b.ts; });

  tape.validate();
  return tape;
}

std::vector<Tape> generate_tapes(const SynthConfig& cfg) {
  std::vector<Tape> tapes;
  tapes.reserve(static_cast<std::size_t>(cfg.n_days));
  for (int d = 0; d < cfg.n_days; ++d) tapes.push_back(generate_tape(cfg, d));
  return tapes;
}

// ---------------------------------------------------------------------------
// JSON config
// ---------------------------------------------------------------------------

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_days")) cfg.n_days = j.at("n_days").get<int>();
    if (j.contains("session_len")) cfg.session_len = j.at("session_len").get<Micros>();
    if (j.contains("tick")) cfg.tick = j.at("tick").get<double>();
    if (j.contains("base_mid")) cfg.base_mid = j.at("base_mid").get<double>();
    if (j.contains("spread_ticks")) cfg.spread_ticks = j.at("spread_ticks").get<int>();
    if (j.contains("quote_rate")) cfg.quote_rate = j.at("quote_rate").get<double>();
    if (j.contains("drift_regime_rate"))
      cfg.drift_regime_rate = j.at("drift_regime_rate").get<double>();
    if (j.contains("drift_magnitude"))
      cfg.drift_magnitude = j.at("drift_magnitude").get<double>();
    if (j.contains("n_clients")) cfg.n_clients = j.at("n_clients").get<int>();
    if (j.contains("informedness")) {
      cfg.informedness.clear();
      if (j.at("informedness").is_array()) {
        for (const auto& v : j.at("informedness")) cfg.informedness.push_back(v.get<double>());
      } else {
        cfg.informedness.push_back(j.at("informedness").get<double>());
      }
    }
    if (j.contains("trade_rate")) cfg.trade_rate = j.at("trade_rate").get<double>();
    if (j.contains("qty_dist")) {
      const auto& q = j.at("qty_dist");
      const std::string kind = q.value("type", "fixed");
      if (kind == "fixed") {
        cfg.qty_dist.kind = QtyDist::Kind::Fixed;
        cfg.qty_dist.value = q.value("value", 2000.0);
      } else if (kind == "lognormal") {
        cfg.qty_dist.kind = QtyDist::Kind::Lognormal;
        cfg.qty_dist.mu = q.value("mu", std::log(2000.0));
        cfg.qty_dist.sigma = q.value("sigma", 0.5);
      } else {
        throw ConfigError("synth: unknown qty_dist type '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["n_days"] = cfg.n_days;
  j["session_len"] = cfg.session_len;
  j["tick"] = cfg.tick;
  j["base_mid"] = cfg.base_mid;
  j["spread_ticks"] = cfg.spread_ticks;
  j["quote_rate"] = cfg.quote_rate;
  j["drift_regime_rate"] = cfg.drift_regime_rate;
  j["drift_magnitude"] = cfg.drift_magnitude;
  j["n_clients"] = cfg.n_clients;
  j["informedness"] = cfg.informedness;
  j["trade_rate"] = cfg.trade_rate;
  if (cfg.qty_dist.kind == QtyDist::Kind::Fixed) {
    j["qty_dist"] = {{"type", "fixed"}, {"value", cfg.qty_dist.value}};
  } else {
    j["qty_dist"] = {{"type", "lognormal"}, {"mu", cfg.qty_dist.mu}, {"sigma", cfg.qty_dist.sigma}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

Tape load_tape(const std::string& quotes_path, const std::string& trades_path,
               int day_id, std::vector<std::string>* client_registry) {
  Tape tape;
  tape.day_id = day_id;
  if (client_registry != nullptr) tape.clients = *client_registry;

  const CsvTable qt = read_csv(quotes_path);
  const std::vector<std::string> qcols = {"ts_us", "bid", "ask", "bid_vol", "ask_vol"};
  for (const auto& c : qcols) {
    if (qt.column(c) < 0) throw DataError(quotes_path + ": missing column " + c);
  }
  const int q_ts = qt.column("ts_us"), q_bid = qt.column("bid"), q_ask = qt.column("ask");
  const int q_bv = qt.column("bid_vol"), q_av = qt.column("ask_vol");
  tape.quotes.reserve(qt.rows.size());
  for (std::size_t i = 0; i < qt.rows.size(); ++i) {
    const auto& r = qt.rows[i];
    const std::string where = quotes_path + ":" + std::to_string(i + 2);
    Quote q;
    q.ts = parse_i64(r[static_cast<std::size_t>(q_ts)], where);
    q.bid = parse_price_micro(r[static_cast<std::size_t>(q_bid)], where);
    q.ask = parse_price_micro(r[static_cast<std::size_t>(q_ask)], where);
    q.bid_vol = parse_f64(r[static_cast<std::size_t>(q_bv)], where);
    q.ask_vol = parse_f64(r[static_cast<std::size_t>(q_av)], where);
    if (q.ts < 0) throw DataError(where + ": negative ts");
    if (!tape.quotes.empty() && q.ts < tape.quotes.back().ts) {
      throw DataError(where + ": quote ts out of order");
    }
    if (q.ask <= q.bid) throw DataError(where + ": crossed book (ask <= bid)");
    if (!(q.bid_vol > 0) || !(q.ask_vol > 0)) throw DataError(where + ": non-positive volume");
    tape.quotes.push_back(q);
  }
  if (tape.quotes.empty()) throw DataError(quotes_path + ": no quotes");

  const CsvTable tt = read_csv(trades_path);
  for (const auto& c : {"ts_us", "client_id", "side", "qty"}) {
    if (tt.column(c) < 0) throw DataError(trades_path + ": missing column " + std::string(c));
  }
  const int t_ts = tt.column("ts_us"), t_cl = tt.column("client_id");
  const int t_sd = tt.column("side"), t_q = tt.column("qty");
  const Micros lo = tape.quotes.front().ts, hi = tape.quotes.back().ts;
  tape.trades.reserve(tt.rows.size());
  for (std::size_t i = 0; i < tt.rows.size(); ++i) {
    const auto& r = tt.rows[i];
    const std::string where = trades_path + ":" + std::to_string(i + 2);
    TradeEvent tr;
    tr.ts = parse_i64(r[static_cast<std::size_t>(t_ts)], where);
    const std::string& cid = r[static_cast<std::size_t>(t_cl)];
    auto it = std::find(tape.clients.begin(), tape.clients.end(), cid);
    if (it == tape.clients.end()) {
      tape.clients.push_back(cid);
      tr.client = static_cast<std::uint32_t>(tape.clients.size() - 1);
    } else {
      tr.client = static_cast<std::uint32_t>(it - tape.clients.begin());
    }
    const std::string& sd = r[static_cast<std::size_t>(t_sd)];
    if (sd == "B") {
      tr.side = Side::Buy;
    } else if (sd == "S") {
      tr.side = Side::Sell;
    } else {
      throw DataError(where + ": side must be B or S, got '" + sd + "'");
    }
    tr.qty = parse_f64(r[static_cast<std::size_t>(t_q)], where);
    if (!(tr.qty > 0)) throw DataError(where + ": non-positive qty");
    if (!tape.trades.empty() && tr.ts < tape.trades.back().ts) {
      throw DataError(where + ": trade ts out of order");
    }
    if (tr.ts < lo || tr.ts > hi) throw DataError(where + ": trade outside quoted span");
    tape.trades.push_back(tr);
  }
  if (client_registry != nullptr) *client_registry = tape.clients;
  return tape;
}

void save_tape_csv(const Tape& tape, const std::string& quotes_path,
                   const std::string& trades_path) {
  CsvWriter qw(quotes_path, "ts_us,bid,ask,bid_vol,ask_vol");
  for (const Quote& q : tape.quotes) {
    qw.write_row({std::to_string(q.ts), format_price_micro(q.bid),
                  format_price_micro(q.ask), format_f64_fixed(q.bid_vol, 6),
                  format_f64_fixed(q.ask_vol, 6)});
  }
  qw.close();
  CsvWriter tw(trades_path, "ts_us,client_id,side,qty");
  for (const TradeEvent& tr : tape.trades) {
    tw.write_row({std::to_string(tr.ts), tape.clients[tr.client],
                  std::string(1, side_char(tr.side)), format_f64_fixed(tr.qty, 6)});
  }
  tw.close();
}

}  // namespace toxflow
