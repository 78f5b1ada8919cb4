#include "toxflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "toxflow/csv.hpp"
#include "toxflow/errors.hpp"

namespace toxflow {

namespace {

void check_scores(const std::vector<ScoredTrade>& scored) {
  for (const auto& s : scored) {
    if (!(s.p >= 0.0 && s.p <= 1.0)) {
      throw DataError("evaluation: score outside [0,1]: " + std::to_string(s.p));
    }
  }
}

std::vector<ScoredTrade> drop_censored(const std::vector<ScoredTrade>& scored) {
  std::vector<ScoredTrade> out;
  out.reserve(scored.size());
  for (const auto& s : scored) {
    if (!s.censored) out.push_back(s);
  }
  return out;
}

}  // namespace

ConfusionRates tpr_fpr(const std::vector<ScoredTrade>& scored, double cutoff) {
  check_scores(scored);
  std::size_t tp = 0, fp = 0, pos = 0, neg = 0;
  for (const auto& s : scored) {
    const bool flagged = s.p > cutoff;
    if (s.y) {
      ++pos;
      tp += flagged;
    } else {
      ++neg;
      fp += flagged;
    }
  }
  ConfusionRates r;
  if (pos) r.tpr = static_cast<double>(tp) / static_cast<double>(pos);
  if (neg) r.fpr = static_cast<double>(fp) / static_cast<double>(neg);
  return r;
}

double auc(const std::vector<ScoredTrade>& scored) {
  check_scores(scored);
  std::vector<std::pair<double, bool>> v;
  v.reserve(scored.size());
  std::size_t pos = 0;
  for (const auto& s : scored) {
    v.emplace_back(s.p, s.y);
    pos += s.y;
  }
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("auc: needs both classes");

  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // Midrank sum over positives: tied scores share the average of the ranks
  // their block occupies, which books half credit for each cross-class tie.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (v[k].second) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum_pos - np * (np + 1) / 2) / (np * nn);
}

std::vector<RocPoint> roc_curve(const std::vector<ScoredTrade>& scored) {
  check_scores(scored);
  std::vector<std::pair<double, bool>> v;
  v.reserve(scored.size());
  std::size_t pos = 0;
  for (const auto& s : scored) {
    v.emplace_back(s.p, s.y);
    pos += s.y;
  }
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_curve: needs both classes");

  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);

  std::vector<RocPoint> roc;
  roc.push_back({1.0, 0.0, 0.0});  // nothing exceeds the top of the range
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    for (std::size_t k = i; k < j; ++k) {
      tp += v[k].second;
      fp += !v[k].second;
    }
    // Threshold strictly below this block: halfway to the next distinct
    // score, or half a unit past the end of the range for the last block.
    const double cutoff =
        j < v.size() ? 0.5 * (v[i].first + v[j].first) : v[i].first - 0.5;
    roc.push_back({cutoff, static_cast<double>(fp) / nn, static_cast<double>(tp) / np});
    i = j;
  }
  return roc;
}

double trapezoid_area(const std::vector<RocPoint>& roc) {
  double area = 0;
  for (std::size_t k = 1; k < roc.size(); ++k) {
    area += 0.5 * (roc[k].tpr + roc[k - 1].tpr) * (roc[k].fpr - roc[k - 1].fpr);
  }
  return area;
}

std::vector<DailyAuc> daily_auc(const std::vector<ScoredTrade>& scored,
                                bool include_censored) {
  const std::vector<ScoredTrade> use = include_censored ? scored : drop_censored(scored);
  std::map<int, std::vector<ScoredTrade>> by_day;
  for (const auto& s : use) by_day[s.day_id].push_back(s);

  std::vector<DailyAuc> out;
  for (const auto& [day, trades] : by_day) {
    const std::size_t pos = static_cast<std::size_t>(
        std::count_if(trades.begin(), trades.end(), [](const auto& s) { return s.y; }));
    if (pos == 0 || pos == trades.size()) continue;  // rate undefined that day
    out.push_back({day, auc(trades), trades.size()});
  }
  return out;
}

std::vector<double> ewma_series(const std::vector<double>& daily, double decay,
                                int window) {
  if (!(decay > 0) || window < 1) throw ConfigError("ewma: decay > 0, window >= 1");
  std::vector<double> out(daily.size());
  for (std::size_t t = 0; t < daily.size(); ++t) {
    double num = 0, den = 0, w = 1;
    for (int j = 0; j < window && j <= static_cast<int>(t); ++j, w *= decay) {
      num += w * daily[t - static_cast<std::size_t>(j)];
      den += w;
    }
    out[t] = num / den;
  }
  return out;
}

GridRoc average_daily_roc(const std::vector<ScoredTrade>& scored, int n_grid,
                          bool include_censored) {
  if (n_grid < 2) throw ConfigError("average_daily_roc: grid needs >= 2 points");
  const std::vector<ScoredTrade> use = include_censored ? scored : drop_censored(scored);
  std::map<int, std::vector<ScoredTrade>> by_day;
  for (const auto& s : use) by_day[s.day_id].push_back(s);

  GridRoc grid;
  grid.fpr.resize(static_cast<std::size_t>(n_grid));
  grid.tpr.assign(static_cast<std::size_t>(n_grid), 0.0);
  for (int k = 0; k < n_grid; ++k) {
    grid.fpr[static_cast<std::size_t>(k)] = static_cast<double>(k) / (n_grid - 1);
  }

  int n_days = 0;
  for (const auto& [day, trades] : by_day) {
    const std::size_t pos = static_cast<std::size_t>(
        std::count_if(trades.begin(), trades.end(), [](const auto& s) { return s.y; }));
    if (pos == 0 || pos == trades.size()) continue;
    const std::vector<RocPoint> roc = roc_curve(trades);
    ++n_days;
    // Interpolate TPR at each grid FPR. Vertices are sorted by FPR; vertical
    // runs (same FPR) contribute their topmost TPR.
    std::size_t v = 0;
    for (int k = 0; k < n_grid; ++k) {
      const double f = grid.fpr[static_cast<std::size_t>(k)];
      while (v + 1 < roc.size() && roc[v + 1].fpr <= f) ++v;
      double tpr;
      if (v + 1 == roc.size() || roc[v].fpr == f) {
        tpr = roc[v].tpr;
      } else {
        const double span = roc[v + 1].fpr - roc[v].fpr;
        const double frac = (f - roc[v].fpr) / span;
        tpr = roc[v].tpr + frac * (roc[v + 1].tpr - roc[v].tpr);
      }
      grid.tpr[static_cast<std::size_t>(k)] += tpr;
    }
  }
  if (n_days == 0) throw DataError("average_daily_roc: no day has both classes");
  for (double& t : grid.tpr) t /= n_days;
  return grid;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  CsvWriter w(path, "day_id,model,horizon_us,auc,n_trades");
  for (const auto& r : rows) {
    w.write_row({std::to_string(r.day_id), r.model, std::to_string(r.horizon_us),
                 format_f64(r.auc), std::to_string(r.n_trades)});
  }
  w.close();
}

void write_roc_csv(const std::string& path, const std::string& model,
                   std::int64_t horizon_us, const std::vector<RocPoint>& roc) {
  CsvWriter w(path, "model,horizon_us,cutoff,fpr,tpr");
  for (const auto& pt : roc) {
    w.write_row({model, std::to_string(horizon_us), format_f64(pt.cutoff),
                 format_f64(pt.fpr), format_f64(pt.tpr)});
  }
  w.close();
}

}  // namespace toxflow
