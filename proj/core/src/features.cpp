#include "toxflow/features.hpp"

#include <algorithm>
#include <cmath>

#include "toxflow/csv.hpp"
#include "toxflow/errors.hpp"

namespace toxflow {

double realized_vol(const std::vector<double>& mids) {
  double sumsq = 0;
  for (std::size_t i = 1; i < mids.size(); ++i) {
    const double d = std::log(mids[i]) - std::log(mids[i - 1]);
    sumsq += d * d;
  }
  return std::sqrt(sumsq);
}

Featurizer::Featurizer(FeatureConfig cfg, std::size_t n_clients)
    : cfg_(cfg), clients_(n_clients) {
  if (cfg_.lot_size <= 0 || cfg_.volume_unit <= 0 || cfg_.time_unit <= 0) {
    throw ConfigError("features: units must be positive");
  }
}

void Featurizer::begin_day(int day_id) {
  end_day();
  day_id_ = day_id;
  day_txns_ = 0;
  day_vol_ = 0;
  now_ts_ = 0;
  has_quote_ = false;
  prev_log_mid_ = 0;
  quotes_.clear();
  trades_.clear();
  has_anchor_.fill(false);
  anchor_log_mid_.fill(0);
}

void Featurizer::end_day() {
  // All windows close by the session's last quote, so every pending label
  // resolves before the next day's first trade.
  for (const PendingLabel& p : pending_) {
    ClientState& cs = clients_.at(p.client);
    ++cs.resolved;
    if (p.y) ++cs.sharp;
  }
  pending_.clear();
}

void Featurizer::release_labels(Micros now) {
  while (!pending_.empty() && pending_.front().resolved_ts < now) {
    const PendingLabel& p = pending_.front();
    ClientState& cs = clients_.at(p.client);
    ++cs.resolved;
    if (p.y) ++cs.sharp;
    pending_.pop_front();
  }
}

double Featurizer::quote_pos(const QuoteEv& e, ClockKind c) const {
  switch (c) {
    case ClockKind::Time: return static_cast<double>(e.ts);
    case ClockKind::Transaction: return static_cast<double>(e.txn_pos);
    case ClockKind::Volume: return e.vol_pos;
  }
  return 0;
}

void Featurizer::evict() {
  // An event leaves the buffers once it is past the 64-unit horizon on every
  // clock. The newest evicted quote is kept per clock as the anchor so the
  // interval-return lookup still sees the mid prevailing at the oldest edge.
  const Micros t_hor = 64 * cfg_.time_unit;
  const double v_hor = 64.0 * cfg_.volume_unit;
  auto gone = [&](Micros ts, std::int64_t txn, double vol) {
    return (now_ts_ - ts >= t_hor) && (day_txns_ - txn >= 64) &&
           (day_vol_ - vol >= v_hor);
  };
  while (!quotes_.empty() &&
         gone(quotes_.front().ts, quotes_.front().txn_pos, quotes_.front().vol_pos)) {
    for (int c = 0; c < kClocks; ++c) {
      anchor_log_mid_[static_cast<std::size_t>(c)] = quotes_.front().log_mid;
      has_anchor_[static_cast<std::size_t>(c)] = true;
    }
    quotes_.pop_front();
  }
  while (!trades_.empty() &&
         gone(trades_.front().ts, trades_.front().txn_pos, trades_.front().vol_pos)) {
    trades_.pop_front();
  }
}

void Featurizer::on_quote(const Quote& q) {
  now_ts_ = q.ts;
  QuoteEv e;
  e.ts = q.ts;
  e.txn_pos = day_txns_;
  e.vol_pos = day_vol_;
  e.log_mid = std::log(q.mid());
  e.d2 = 0;
  if (has_quote_) {
    const double d = e.log_mid - prev_log_mid_;
    e.d2 = d * d;
  }
  e.spread = q.spread();
  e.imb = q.imbalance();
  e.tv_bid = std::log1p(std::abs(q.bid_vol));
  e.tv_ask = std::log1p(std::abs(q.ask_vol));
  quotes_.push_back(e);

  expanding_sumsq_ += e.d2;
  ++total_quotes_;
  last_quote_ = q;
  has_quote_ = true;
  prev_log_mid_ = e.log_mid;
  evict();
}

void Featurizer::apply_trade(const TradeEvent& trade, const Label& label) {
  if (!has_quote_) throw DataError("features: trade before first quote");
  ClientState& cs = clients_.at(trade.client);
  const double px = trade.side == Side::Buy ? price_to_double(last_quote_.ask)
                                            : price_to_double(last_quote_.bid);
  if (trade.side == Side::Buy) {
    cs.cash -= px * trade.qty;
    cs.inv_lots += trade.qty / cfg_.lot_size;
  } else {
    cs.cash += px * trade.qty;
    cs.inv_lots -= trade.qty / cfg_.lot_size;
  }
  ++cs.n_trades;
  ++total_trades_;

  now_ts_ = trade.ts;
  ++day_txns_;           // this trade's transaction-clock position
  day_vol_ += trade.qty; // and volume-clock position, inclusive of itself
  trades_.push_back({trade.ts, day_txns_, day_vol_, trade.client});
  pending_.push_back({label.resolved_ts, trade.client, label.y});
  evict();
}

std::optional<double> Featurizer::log_mid_at(ClockKind c, double coord) const {
  // quotes_ positions are non-decreasing on every clock; find the last <= coord.
  const auto begin = quotes_.begin();
  const auto end = quotes_.end();
  auto it = std::partition_point(begin, end, [&](const QuoteEv& e) {
    return quote_pos(e, c) <= coord;
  });
  if (it != begin) return (it - 1)->log_mid;
  if (has_anchor_[static_cast<std::size_t>(c)]) {
    return anchor_log_mid_[static_cast<std::size_t>(c)];
  }
  return std::nullopt;
}

std::vector<double> Featurizer::features_for(const TradeEvent& trade) {
  if (!has_quote_) throw DataError("features: trade before first quote");
  release_labels(trade.ts);

  const int dim = cfg_.dim();
  std::vector<double> x(static_cast<std::size_t>(dim), 0.0);
  const ClientState& cs = clients_.at(trade.client);

  x[0] = signed_log(cs.cash);
  x[1] = signed_log(cs.inv_lots);
  x[2] = trade.qty;
  x[3] = last_quote_.spread();
  x[4] = last_quote_.imbalance();
  x[5] = std::log1p(std::abs(last_quote_.bid_vol));
  x[6] = std::log1p(std::abs(last_quote_.ask_vol));
  x[7] = price_to_double(last_quote_.ask);
  x[8] = price_to_double(last_quote_.bid);
  x[9] = last_quote_.mid();
  x[10] = static_cast<double>(total_quotes_);
  x[11] = static_cast<double>(cs.n_trades);
  x[12] = static_cast<double>(total_trades_);
  x[13] = std::sqrt(expanding_sumsq_);
  x[14] = cs.resolved > 0
              ? static_cast<double>(cs.sharp) / static_cast<double>(cs.resolved)
              : 0.0;

  // Which clocks to emit, and where each one's 56-feature block starts.
  std::array<int, kClocks> block_of{};
  block_of.fill(-1);
  if (cfg_.clock_ablation) {
    block_of[static_cast<std::size_t>(*cfg_.clock_ablation)] = 0;
  } else {
    for (int c = 0; c < kClocks; ++c) block_of[static_cast<std::size_t>(c)] = c;
  }

  const std::array<double, kClocks> now_pos = {
      static_cast<double>(trade.ts), static_cast<double>(day_txns_), day_vol_};
  const std::array<double, kClocks> unit = {static_cast<double>(cfg_.time_unit),
                                            1.0, cfg_.volume_unit};

  // Distance -> interval index, or -1 beyond the 64-unit horizon.
  auto bucket = [](double dist, double y) -> int {
    if (dist < y) return 0;
    double hi = 2 * y;
    for (int b = 1; b < kIntervals; ++b) {
      if (dist < hi) return b;
      hi *= 2;
    }
    return -1;
  };

  struct Cell {
    double sum_d2 = 0;
    bool seen_quote = false;  // first quote in the cell opens the window; its
                              // increment reaches back outside and is skipped
    std::int64_t n_quotes = 0;
    std::int64_t n_client_trades = 0;
    double sum_tvb = 0, sum_tva = 0, sum_spread = 0, sum_imb = 0;
  };
  std::array<std::array<Cell, kIntervals>, kClocks> cells{};

  for (const QuoteEv& e : quotes_) {
    for (int c = 0; c < kClocks; ++c) {
      if (block_of[static_cast<std::size_t>(c)] < 0) continue;
      const double dist = now_pos[static_cast<std::size_t>(c)] - quote_pos(e, static_cast<ClockKind>(c));
      const int b = bucket(dist, unit[static_cast<std::size_t>(c)]);
      if (b < 0) continue;
      Cell& cell = cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
      if (cell.seen_quote) {
        cell.sum_d2 += e.d2;
      } else {
        cell.seen_quote = true;
      }
      ++cell.n_quotes;
      cell.sum_tvb += e.tv_bid;
      cell.sum_tva += e.tv_ask;
      cell.sum_spread += e.spread;
      cell.sum_imb += e.imb;
    }
  }
  for (const TradeEv& e : trades_) {
    if (e.client != trade.client) continue;
    const std::array<double, kClocks> pos = {static_cast<double>(e.ts),
                                             static_cast<double>(e.txn_pos), e.vol_pos};
    for (int c = 0; c < kClocks; ++c) {
      if (block_of[static_cast<std::size_t>(c)] < 0) continue;
      const int b = bucket(now_pos[static_cast<std::size_t>(c)] - pos[static_cast<std::size_t>(c)],
                           unit[static_cast<std::size_t>(c)]);
      if (b >= 0) ++cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)].n_client_trades;
    }
  }

  for (int c = 0; c < kClocks; ++c) {
    const int blk = block_of[static_cast<std::size_t>(c)];
    if (blk < 0) continue;
    const double y = unit[static_cast<std::size_t>(c)];
    double lo = 0, hi = y;
    for (int b = 0; b < kIntervals; ++b) {
      const Cell& cell = cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
      const std::size_t base = static_cast<std::size_t>(
          kStateFeatures + blk * kFeaturesPerClock + b * kStats);
      x[base + 0] = std::sqrt(cell.sum_d2);
      x[base + 1] = static_cast<double>(cell.n_client_trades);
      x[base + 2] = static_cast<double>(cell.n_quotes);
      const auto young = log_mid_at(static_cast<ClockKind>(c),
                                    now_pos[static_cast<std::size_t>(c)] - lo);
      const auto old = log_mid_at(static_cast<ClockKind>(c),
                                  now_pos[static_cast<std::size_t>(c)] - hi);
      x[base + 3] = (young && old) ? *young - *old : 0.0;
      if (cell.n_quotes > 0) {
        const double n = static_cast<double>(cell.n_quotes);
        x[base + 4] = cell.sum_tvb / n;
        x[base + 5] = cell.sum_tva / n;
        x[base + 6] = cell.sum_spread / n;
        x[base + 7] = cell.sum_imb / n;
      }
      lo = hi;
      hi *= 2;
    }
  }

  if (!cfg_.client_features) {
    // Client identity carries no signal in this mode: cash, inventory, own
    // activity counts, toxic share, and the per-interval own-trade counts.
    x[0] = x[1] = x[11] = x[14] = 0.0;
    for (int c = 0; c < (cfg_.clock_ablation ? 1 : kClocks); ++c) {
      for (int b = 0; b < kIntervals; ++b) {
        x[static_cast<std::size_t>(kStateFeatures + c * kFeaturesPerClock + b * kStats + 1)] = 0.0;
      }
    }
  }
  return x;
}

std::vector<FeatureRow> featurize_tapes(const std::vector<Tape>& tapes,
                                        const std::vector<std::vector<Label>>& labels,
                                        const FeatureConfig& cfg,
                                        std::size_t n_clients) {
  if (tapes.size() != labels.size()) {
    throw DataError("featurize: tapes/labels size mismatch");
  }
  Featurizer fz(cfg, n_clients);
  std::vector<FeatureRow> rows;
  for (std::size_t d = 0; d < tapes.size(); ++d) {
    const Tape& tape = tapes[d];
    if (labels[d].size() != tape.trades.size()) {
      throw DataError("featurize: label/trade count mismatch on day " +
                      std::to_string(tape.day_id));
    }
    fz.begin_day(tape.day_id);
    std::size_t qi = 0;
    for (std::size_t i = 0; i < tape.trades.size(); ++i) {
      const TradeEvent& tr = tape.trades[i];
      while (qi < tape.quotes.size() && tape.quotes[qi].ts <= tr.ts) {
        fz.on_quote(tape.quotes[qi]);
        ++qi;
      }
      FeatureRow row;
      row.day_id = tape.day_id;
      row.ts = tr.ts;
      row.client = tr.client;
      row.side = tr.side;
      row.qty = tr.qty;
      row.x = fz.features_for(tr);
      rows.push_back(std::move(row));
      fz.apply_trade(tr, labels[d][i]);
    }
    while (qi < tape.quotes.size()) {
      fz.on_quote(tape.quotes[qi]);
      ++qi;
    }
    fz.end_day();
  }
  return rows;
}

void write_features_csv(const std::vector<FeatureRow>& rows,
                        const std::vector<std::string>& clients,
                        const std::string& path) {
  if (rows.empty()) throw DataError("write_features_csv: no rows");
  std::string header = "ts_us,client_id,side";
  for (std::size_t i = 0; i < rows[0].x.size(); ++i) {
    header += ",f" + std::to_string(i);
  }
  CsvWriter w(path, header);
  std::vector<std::string> fields;
  for (const FeatureRow& r : rows) {
    fields.clear();
    fields.push_back(std::to_string(r.ts));
    fields.push_back(clients.at(r.client));
    fields.emplace_back(1, side_char(r.side));
    for (double v : r.x) fields.push_back(format_f64(v));
    w.write_row(fields);
  }
  w.close();
}

}  // namespace toxflow
