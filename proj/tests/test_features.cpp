#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "doctest.h"
#include "feature_oracle.hpp"
#include "test_util.hpp"
#include "toxflow/csv.hpp"
#include "toxflow/features.hpp"
#include "toxflow/labeler.hpp"
#include "toxflow/rng.hpp"

using namespace toxflow;
using namespace toxflow::testutil;

namespace {

// Count-valued slots must match exactly; everything else to 1e-10 relative.
bool is_count_slot(std::size_t i) {
  if (i == 10 || i == 11 || i == 12) return true;
  if (i < static_cast<std::size_t>(kStateFeatures)) return false;
  const std::size_t s = (i - kStateFeatures) % kStats;
  return s == 1 || s == 2;
}

std::string first_mismatch(const std::vector<double>& got,
                           const std::vector<double>& want) {
  if (got.size() != want.size()) return "dim mismatch";
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (is_count_slot(i)) {
      if (got[i] != want[i]) {
        return "count slot " + std::to_string(i) + ": got " +
               std::to_string(got[i]) + " want " + std::to_string(want[i]);
      }
    } else {
      const double tol = 1e-10 * (1.0 + std::max(std::abs(got[i]), std::abs(want[i])));
      if (!(std::abs(got[i] - want[i]) <= tol)) {
        return "slot " + std::to_string(i) + ": got " + std::to_string(got[i]) +
               " want " + std::to_string(want[i]);
      }
    }
  }
  return {};
}

Quote mk_quote(Micros ts, PriceMicro bid, PriceMicro ask, double bv = 50,
               double av = 50) {
  Quote q;
  q.ts = ts;
  q.bid = bid;
  q.ask = ask;
  q.bid_vol = bv;
  q.ask_vol = av;
  return q;
}

TradeEvent mk_trade(Micros ts, std::uint32_t client, Side side, double qty) {
  TradeEvent t;
  t.ts = ts;
  t.client = client;
  t.side = side;
  t.qty = qty;
  return t;
}

}  // namespace

// ============================================================================
// Primitive ops
// ============================================================================

TEST_CASE("realized vol of consecutive mids") {
  const double r = 1e-4;
  const std::vector<double> mids = {1.0, std::exp(r), std::exp(2 * r)};
  CHECK(realized_vol(mids) == doctest::Approx(std::sqrt(2.0) * 1e-4).epsilon(1e-12));
  CHECK(realized_vol({1.1, 1.1, 1.1, 1.1}) == 0.0);
  CHECK(realized_vol({1.2}) == 0.0);
  CHECK(realized_vol({}) == 0.0);
}

TEST_CASE("signed log is odd and monotone") {
  CHECK(signed_log(0.0) == 0.0);
  CHECK(signed_log(-3.5) == -signed_log(3.5));
  CHECK(signed_log(std::exp(1.0) - 1.0) == doctest::Approx(1.0));
  CHECK(signed_log(10.0) > signed_log(9.0));
}

TEST_CASE("feature dimensions") {
  FeatureConfig full;
  CHECK(full.dim() == 183);
  FeatureConfig abl;
  abl.clock_ablation = ClockKind::Volume;
  CHECK(abl.dim() == 71);
  CHECK(kFullFeatureDim == 183);
}

// ============================================================================
// Streaming featurizer vs from-scratch replay
// ============================================================================

TEST_CASE("streaming features match full-history replay on random tapes") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    CAPTURE(seed);
    Rng rng(mix_seed(0xfea7, seed));
    const std::size_t n_days = 1 + seed % 3;

    std::vector<Tape> tapes;
    std::vector<std::vector<Label>> labels;
    std::size_t n_clients = 0;
    for (std::size_t d = 0; d < n_days; ++d) {
      Tape t = make_random_tape(rng);
      t.day_id = static_cast<int>(d);
      n_clients = std::max(n_clients, t.clients.size());
      labels.push_back(label_tape(t, Horizon{2'000'000}));
      tapes.push_back(std::move(t));
    }

    FeatureConfig cfg;
    if (seed % 4 == 2) cfg.clock_ablation = static_cast<ClockKind>(seed % 3);
    if (seed % 4 == 3) cfg.client_features = false;
    CAPTURE(cfg.dim());

    const std::vector<FeatureRow> rows = featurize_tapes(tapes, labels, cfg, n_clients);
    std::size_t r = 0;
    for (std::size_t d = 0; d < n_days; ++d) {
      for (std::size_t i = 0; i < tapes[d].trades.size(); ++i, ++r) {
        CAPTURE(d);
        CAPTURE(i);
        REQUIRE(rows[r].ts == tapes[d].trades[i].ts);
        const std::vector<double> want = oracle_features(tapes, labels, cfg, d, i);
        const std::string err = first_mismatch(rows[r].x, want);
        REQUIRE_MESSAGE(err.empty(), err);
      }
    }
    REQUIRE(r == rows.size());
  }
}

TEST_CASE("featurize is deterministic") {
  Rng rng(7);
  Tape t = make_random_tape(rng);
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{1'000'000})};
  const std::vector<Tape> tapes = {t};
  const auto a = featurize_tapes(tapes, labels, {}, t.clients.size());
  const auto b = featurize_tapes(tapes, labels, {}, t.clients.size());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].x == b[i].x);  // bitwise, not approximate
  }
}

// ============================================================================
// Hand-checked fixtures
// ============================================================================

TEST_CASE("trade at a quote's timestamp sees that quote") {
  Tape t;
  t.clients = {"K0"};
  t.quotes = {mk_quote(0, 1'000'000, 1'000'004),
              mk_quote(100, 1'000'020, 1'000'026)};
  t.trades = {mk_trade(100, 0, Side::Buy, 1000)};
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{10})};
  const auto rows = featurize_tapes({t}, labels, {}, 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].x[7] == price_to_double(1'000'026));
  CHECK(rows[0].x[8] == price_to_double(1'000'020));
  CHECK(rows[0].x[9] == (price_to_double(1'000'020) + price_to_double(1'000'026)) / 2);
  CHECK(rows[0].x[3] == doctest::Approx(6e-6));
  CHECK(rows[0].x[10] == 2.0);  // both quotes already count
}

TEST_CASE("time intervals beyond the horizon are empty") {
  Tape t;
  t.clients = {"K0"};
  t.quotes = {mk_quote(0, 1'000'000, 1'000'004, 10, 20),
              mk_quote(400'000'000, 1'000'100, 1'000'104, 30, 40),
              mk_quote(600'000'000, 1'000'200, 1'000'204)};
  // 70s after the last quote update: outside the 64s time horizon.
  t.trades = {mk_trade(470'000'000, 0, Side::Sell, 500)};
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{1000})};
  const auto rows = featurize_tapes({t}, labels, {}, 1);
  REQUIRE(rows.size() == 1);
  const auto& x = rows[0].x;

  // Whole time block: no quotes or trades in any interval, and the
  // prevailing mid at both edges of every interval is the same quote.
  for (int b = 0; b < kIntervals; ++b) {
    for (int s = 0; s < kStats; ++s) {
      CAPTURE(b);
      CAPTURE(s);
      CHECK(x[static_cast<std::size_t>(kStateFeatures + b * kStats + s)] == 0.0);
    }
  }
  // Transaction clock: no trades yet, so both quotes sit at distance 0.
  const std::size_t txn0 = static_cast<std::size_t>(kStateFeatures + kFeaturesPerClock);
  CHECK(x[txn0 + 2] == 2.0);
  const double d = std::log(price_to_double(1'000'102)) - std::log(price_to_double(1'000'002));
  CHECK(x[txn0 + 0] == doctest::Approx(std::abs(d)).epsilon(1e-12));
  CHECK(x[txn0 + 6] == doctest::Approx(4e-6).epsilon(1e-12));
  // State features still see the prevailing quote.
  CHECK(x[9] == doctest::Approx(price_to_double(1'000'102)).epsilon(1e-12));
}

TEST_CASE("toxic share unlocks strictly after resolution") {
  Tape t;
  t.clients = {"K0"};
  t.quotes = {mk_quote(0, 1'000'000, 1'000'004),
              mk_quote(10, 1'000'010, 1'000'014),  // bid > first ask: toxic
              mk_quote(1000, 1'000'010, 1'000'014)};
  t.trades = {mk_trade(0, 0, Side::Buy, 1000),    // resolves at ts 50
              mk_trade(50, 0, Side::Buy, 1000),   // at resolution: not yet
              mk_trade(51, 0, Side::Buy, 1000)};  // strictly after: counted
  const Horizon h{50};
  const std::vector<std::vector<Label>> labels = {label_tape(t, h)};
  REQUIRE(labels[0][0].y);
  REQUIRE(labels[0][0].resolved_ts == 50);

  const auto rows = featurize_tapes({t}, labels, {}, 1);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].x[14] == 0.0);
  CHECK(rows[1].x[14] == 0.0);  // resolved_ts == ts is not yet released
  CHECK(rows[2].x[14] == 1.0);
  CHECK(rows[1].x[11] == 1.0);
  CHECK(rows[2].x[11] == 2.0);
}

TEST_CASE("constant-mid tape has zero vol and return features") {
  Rng rng(99);
  Tape t;
  t.clients = {"K0", "K1"};
  Micros ts = 0;
  for (int i = 0; i < 300; ++i) {
    t.quotes.push_back(mk_quote(ts, 999'997, 1'000'003, 1 + rng.uniform(0, 9),
                                1 + rng.uniform(0, 9)));
    ts += 1 + static_cast<Micros>(rng.uniform_int(2'000'000));
  }
  for (int i = 0; i < 40; ++i) {
    t.trades.push_back(mk_trade(
        static_cast<Micros>(rng.uniform_int(static_cast<std::uint64_t>(ts))),
        static_cast<std::uint32_t>(rng.uniform_int(2)),
        rng.bernoulli(0.5) ? Side::Buy : Side::Sell, 1000));
  }
  std::sort(t.trades.begin(), t.trades.end(),
            [](const TradeEvent& a, const TradeEvent& b) { return a.ts < b.ts; });
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{5'000'000})};
  for (const Label& l : labels[0]) REQUIRE(!l.y);

  const auto rows = featurize_tapes({t}, labels, {}, 2);
  for (const FeatureRow& r : rows) {
    CHECK(r.x[13] == 0.0);
    for (int c = 0; c < kClocks; ++c) {
      for (int b = 0; b < kIntervals; ++b) {
        const std::size_t base = static_cast<std::size_t>(
            kStateFeatures + c * kFeaturesPerClock + b * kStats);
        CHECK(r.x[base + 0] == 0.0);  // realized vol
        CHECK(r.x[base + 3] == 0.0);  // log mid return
      }
    }
  }
}

TEST_CASE("single-client tape: own counts equal total counts") {
  Rng rng(4242);
  RandomTapeOpts opts;
  opts.max_clients = 1;
  Tape t = make_random_tape(rng, opts);
  REQUIRE(t.clients.size() == 1);
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{2'000'000})};
  const auto rows = featurize_tapes({t}, labels, {}, 1);
  for (const FeatureRow& r : rows) CHECK(r.x[11] == r.x[12]);
}

// ============================================================================
// Day boundaries
// ============================================================================

TEST_CASE("interval buffers reset at the day boundary, counters persist") {
  Rng rng(31);
  RandomTapeOpts opts;
  opts.max_trades = 30;
  Tape day0 = make_random_tape(rng, opts);
  while (day0.trades.empty()) day0 = make_random_tape(rng, opts);
  Tape day1 = day0;
  day0.day_id = 0;
  day1.day_id = 1;
  const Horizon h{2'000'000};
  const std::vector<Tape> tapes = {day0, day1};
  const std::vector<std::vector<Label>> labels = {label_tape(day0, h),
                                                  label_tape(day1, h)};
  const auto rows = featurize_tapes(tapes, labels, {}, day0.clients.size());
  const std::size_t n = day0.trades.size();
  REQUIRE(rows.size() == 2 * n);

  const auto& a = rows[0].x;      // first trade, day 0
  const auto& b = rows[n].x;      // same trade, day 1
  // Clock features are day-local: identical tapes give identical blocks.
  for (std::size_t i = kStateFeatures; i < a.size(); ++i) {
    CAPTURE(i);
    CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
  }
  // Global counters keep running.
  CHECK(b[10] == a[10] + static_cast<double>(day0.quotes.size()));
  const std::uint32_t cl = day0.trades[0].client;
  double cl_trades = 0;
  for (const TradeEvent& tr : day0.trades) {
    if (tr.client == cl) ++cl_trades;
  }
  CHECK(b[11] == a[11] + cl_trades);
  CHECK(b[12] == a[12] + static_cast<double>(n));
}

TEST_CASE("pending labels flush at end of day") {
  Tape day0;
  day0.day_id = 0;
  day0.clients = {"K0"};
  day0.quotes = {mk_quote(0, 1'000'000, 1'000'004),
                 mk_quote(10, 1'000'010, 1'000'014)};
  // Window is censored at the close; still resolved before the next day.
  day0.trades = {mk_trade(5, 0, Side::Buy, 1000)};
  Tape day1 = day0;
  day1.day_id = 1;
  const Horizon h{1'000'000};
  const std::vector<std::vector<Label>> labels = {label_tape(day0, h),
                                                  label_tape(day1, h)};
  REQUIRE(labels[0][0].censored);
  REQUIRE(labels[0][0].y);  // bid jumps over the entry ask before the close
  const auto rows = featurize_tapes({day0, day1}, labels, {}, 1);
  CHECK(rows[0].x[14] == 0.0);
  CHECK(rows[1].x[14] == 1.0);
}

// ============================================================================
// Variants
// ============================================================================

TEST_CASE("clock ablation slices the full vector") {
  Rng rng(88);
  Tape t = make_random_tape(rng);
  while (t.trades.empty()) t = make_random_tape(rng);
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{2'000'000})};
  const auto full = featurize_tapes({t}, labels, {}, t.clients.size());

  for (int c = 0; c < kClocks; ++c) {
    CAPTURE(c);
    FeatureConfig cfg;
    cfg.clock_ablation = static_cast<ClockKind>(c);
    const auto abl = featurize_tapes({t}, labels, cfg, t.clients.size());
    REQUIRE(abl.size() == full.size());
    for (std::size_t r = 0; r < abl.size(); ++r) {
      REQUIRE(abl[r].x.size() == 71);
      for (int i = 0; i < kStateFeatures; ++i) CHECK(abl[r].x[i] == full[r].x[i]);
      for (int i = 0; i < kFeaturesPerClock; ++i) {
        CHECK(abl[r].x[static_cast<std::size_t>(kStateFeatures + i)] ==
              full[r].x[static_cast<std::size_t>(kStateFeatures + c * kFeaturesPerClock + i)]);
      }
    }
  }
}

TEST_CASE("client features can be switched off") {
  Rng rng(17);
  Tape t = make_random_tape(rng);
  while (t.trades.size() < 5) t = make_random_tape(rng);
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{2'000'000})};
  const auto full = featurize_tapes({t}, labels, {}, t.clients.size());
  FeatureConfig cfg;
  cfg.client_features = false;
  const auto anon = featurize_tapes({t}, labels, cfg, t.clients.size());
  REQUIRE(anon.size() == full.size());
  for (std::size_t r = 0; r < anon.size(); ++r) {
    for (std::size_t i = 0; i < anon[r].x.size(); ++i) {
      const bool zeroed = i == 0 || i == 1 || i == 11 || i == 14 ||
                          (i >= static_cast<std::size_t>(kStateFeatures) &&
                           (i - kStateFeatures) % kStats == 1);
      if (zeroed) {
        CHECK(anon[r].x[i] == 0.0);
      } else {
        CHECK(anon[r].x[i] == full[r].x[i]);
      }
    }
  }
}

// ============================================================================
// CSV dump
// ============================================================================

TEST_CASE("feature dump round-trips through csv") {
  Rng rng(55);
  Tape t = make_random_tape(rng);
  while (t.trades.size() < 3) t = make_random_tape(rng);
  const std::vector<std::vector<Label>> labels = {label_tape(t, Horizon{2'000'000})};
  const auto rows = featurize_tapes({t}, labels, {}, t.clients.size());

  const std::string path = "/tmp/toxflow_test_features.csv";
  write_features_csv(rows, t.clients, path);
  const CsvTable tab = read_csv(path);
  REQUIRE(tab.header.size() == 3 + 183);
  CHECK(tab.header[0] == "ts_us");
  CHECK(tab.header[3] == "f0");
  CHECK(tab.header.back() == "f182");
  REQUIRE(tab.rows.size() == rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    CHECK(parse_i64(tab.rows[r][0], "ts") == rows[r].ts);
    CHECK(tab.rows[r][1] == t.clients[rows[r].client]);
    for (std::size_t i = 0; i < rows[r].x.size(); ++i) {
      // shortest round-trip formatting: parse back to the identical double
      CHECK(parse_f64(tab.rows[r][3 + i], "f") == rows[r].x[i]);
    }
  }
  std::remove(path.c_str());
}
