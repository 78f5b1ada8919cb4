#include "toxflow/labeler.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "toxflow/csv.hpp"
#include "toxflow/errors.hpp"

namespace toxflow {

namespace {

Micros window_end(const Tape& tape, const TradeEvent& trade, Horizon h) {
  return std::min(trade.ts + h.g, tape.session_end());
}

}  // namespace

Label label_trade(const Tape& tape, const TradeEvent& trade, Horizon h) {
  if (h.g <= 0) throw ConfigError("labeler: horizon must be positive");
  const Quote* q0 = tape.prevailing_quote(trade.ts);
  if (q0 == nullptr) throw DataError("labeler: trade before first quote");

  Label lab;
  lab.censored = trade.ts + h.g > tape.session_end();
  lab.resolved_ts = window_end(tape, trade, h);

  // Quotes strictly after the trade, up to and including resolved_ts.
  auto it = std::upper_bound(tape.quotes.begin(), tape.quotes.end(), trade.ts,
                             [](Micros t, const Quote& q) { return t < q.ts; });
  for (; it != tape.quotes.end() && it->ts <= lab.resolved_ts; ++it) {
    const bool hit = trade.side == Side::Buy ? it->bid > q0->ask : it->ask < q0->bid;
    if (hit) {
      lab.y = true;
      lab.tau = it->ts;
      break;
    }
  }
  return lab;
}

std::vector<Label> label_tape(const Tape& tape, Horizon h) {
  if (h.g <= 0) throw ConfigError("labeler: horizon must be positive");
  const std::size_t m = tape.trades.size();
  std::vector<Label> labels(m);
  const Micros t_end = tape.session_end();

  // Pending book per side, keyed by entry price. A quote with bid b settles
  // every pending buy with entry ask < b; symmetrically for sells.
  using Book = std::multimap<PriceMicro, std::size_t>;
  Book buys, sells;
  struct PendingRef {
    Micros limit;        // trade.ts + g
    std::size_t idx;
    Book::iterator it;   // dangling once done[idx] is set
  };
  std::deque<PendingRef> expiry;
  std::vector<bool> done(m, false);

  for (std::size_t i = 0; i < m; ++i) {
    const TradeEvent& tr = tape.trades[i];
    labels[i].censored = tr.ts + h.g > t_end;
    labels[i].resolved_ts = window_end(tape, tr, h);
  }

  std::size_t next_trade = 0;
  for (const Quote& q : tape.quotes) {
    // Admit trades that happened before this quote; a quote at the trade's
    // own timestamp precedes it (quote-then-trade) and cannot settle it.
    while (next_trade < m && tape.trades[next_trade].ts < q.ts) {
      const TradeEvent& tr = tape.trades[next_trade];
      const Quote* q0 = tape.prevailing_quote(tr.ts);
      if (q0 == nullptr) throw DataError("labeler: trade before first quote");
      Book& book = tr.side == Side::Buy ? buys : sells;
      const PriceMicro entry = tr.side == Side::Buy ? q0->ask : q0->bid;
      auto it = book.emplace(entry, next_trade);
      expiry.push_back({tr.ts + h.g, next_trade, it});
      ++next_trade;
    }
    // Retire windows that closed strictly before this quote.
    while (!expiry.empty() && expiry.front().limit < q.ts) {
      const PendingRef ref = expiry.front();
      expiry.pop_front();
      if (!done[ref.idx]) {
        done[ref.idx] = true;  // benign
        if (tape.trades[ref.idx].side == Side::Buy) {
          buys.erase(ref.it);
        } else {
          sells.erase(ref.it);
        }
      }
    }
    // Settle toxic hits.
    for (auto it = buys.begin(); it != buys.end() && it->first < q.bid;) {
      labels[it->second].y = true;
      labels[it->second].tau = q.ts;
      done[it->second] = true;
      it = buys.erase(it);
    }
    for (auto it = sells.upper_bound(q.ask); it != sells.end();) {
      labels[it->second].y = true;
      labels[it->second].tau = q.ts;
      done[it->second] = true;
      it = sells.erase(it);
    }
  }
  // Whatever is still pending ran out of session: benign, already censored.
  return labels;
}

LabelSummary summarize_labels(const std::vector<Label>& labels) {
  LabelSummary s;
  s.n_trades = labels.size();
  for (const Label& l : labels) {
    if (l.y) ++s.n_toxic;
    if (l.censored) {
      ++s.n_censored;
    } else {
      ++s.n_uncensored;
      if (l.y) ++s.n_toxic_uncensored;
    }
  }
  return s;
}

void write_labels_csv(const Tape& tape, const std::vector<Label>& labels,
                      Horizon h, const std::string& path) {
  if (labels.size() != tape.trades.size()) {
    throw DataError("write_labels_csv: label/trade count mismatch");
  }
  CsvWriter w(path, "ts_us,client_id,side,horizon_us,y,tau_us,censored");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const TradeEvent& tr = tape.trades[i];
    const Label& l = labels[i];
    w.write_row({std::to_string(tr.ts), tape.clients[tr.client],
                 std::string(1, side_char(tr.side)), std::to_string(h.g),
                 l.y ? "1" : "0", l.tau ? std::to_string(*l.tau) : "",
                 l.censored ? "1" : "0"});
  }
  w.close();
}

std::vector<Label> load_labels_csv(const std::string& path, Horizon h,
                                   const Tape& tape) {
  const CsvTable t = read_csv(path);
  for (const auto& c : {"ts_us", "side", "horizon_us", "y", "tau_us", "censored"}) {
    if (t.column(c) < 0) throw DataError(path + ": missing column " + std::string(c));
  }
  const int c_ts = t.column("ts_us"), c_h = t.column("horizon_us");
  const int c_y = t.column("y"), c_tau = t.column("tau_us"), c_cn = t.column("censored");
  if (t.rows.size() != tape.trades.size()) {
    throw DataError(path + ": row count does not match tape trades");
  }
  std::vector<Label> labels(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = path + ":" + std::to_string(i + 2);
    const Micros ts = parse_i64(r[static_cast<std::size_t>(c_ts)], where);
    if (ts != tape.trades[i].ts) throw DataError(where + ": ts does not match tape");
    if (parse_i64(r[static_cast<std::size_t>(c_h)], where) != h.g) {
      throw DataError(where + ": horizon mismatch");
    }
    Label& l = labels[i];
    l.y = parse_i64(r[static_cast<std::size_t>(c_y)], where) != 0;
    const std::string& tau = r[static_cast<std::size_t>(c_tau)];
    if (!tau.empty()) l.tau = parse_i64(tau, where);
    l.censored = parse_i64(r[static_cast<std::size_t>(c_cn)], where) != 0;
    l.resolved_ts = std::min(ts + h.g, tape.session_end());
  }
  return labels;
}

}  // namespace toxflow
