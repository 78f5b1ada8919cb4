#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toxflow/market_data.hpp"

namespace toxflow {

// ============================================================================
// Classifier evaluation: confusion rates under a strict probability cutoff,
// ROC curves, Mann-Whitney AUC, and per-day aggregation with an
// exponentially-weighted moving average.
// ============================================================================

struct ScoredTrade {
  double p = 0;  // predicted toxicity in [0,1]
  bool y = false;
  Micros ts = 0;
  int day_id = 0;
  bool censored = false;  // label window truncated by session end
};

// A trade is flagged iff p > cutoff (strict). Rates are absent when their
// denominator class is missing.
struct ConfusionRates {
  std::optional<double> tpr;
  std::optional<double> fpr;
};
ConfusionRates tpr_fpr(const std::vector<ScoredTrade>& scored, double cutoff);

// Probability that a random toxic trade outscores a random benign one, ties
// counted half, computed from midranks of the pooled sort. Throws DataError
// unless both classes are present.
double auc(const std::vector<ScoredTrade>& scored);

// ROC traced over all cutoffs. Thresholds are placed strictly between
// adjacent distinct scores (and beyond the extremes) so each vertex is
// insensitive to which side of a tie the cutoff falls; endpoints are always
// (0,0) and (1,1). The trapezoidal area under this polyline equals auc().
struct RocPoint {
  double cutoff = 0;
  double fpr = 0;
  double tpr = 0;
};
std::vector<RocPoint> roc_curve(const std::vector<ScoredTrade>& scored);
double trapezoid_area(const std::vector<RocPoint>& roc);

// Per-day AUC over day_id groups, in ascending day order. Days missing a
// class are skipped (their rate is undefined). Censored trades are excluded
// unless asked for.
struct DailyAuc {
  int day_id = 0;
  double auc = 0;
  std::size_t n_trades = 0;  // trades entering the computation that day
};
std::vector<DailyAuc> daily_auc(const std::vector<ScoredTrade>& scored,
                                bool include_censored = false);

// Exponentially-weighted moving average: most recent day has weight 1,
// decaying by `decay` per day back, truncated at `window` days, normalized.
// Emits one value per input day.
std::vector<double> ewma_series(const std::vector<double>& daily,
                                double decay = 1.0 / 3.0, int window = 5);

// Average of the daily ROC curves: TPR linearly interpolated on a fixed
// FPR grid of n_grid points spanning [0,1], then averaged across days.
struct GridRoc {
  std::vector<double> fpr;
  std::vector<double> tpr;
};
GridRoc average_daily_roc(const std::vector<ScoredTrade>& scored, int n_grid = 101,
                          bool include_censored = false);

// ============================================================================
// CSV artifacts
// ============================================================================

struct MetricsRow {
  int day_id = 0;
  std::string model;
  std::int64_t horizon_us = 0;
  double auc = 0;
  std::size_t n_trades = 0;
};
// header: day_id,model,horizon_us,auc,n_trades
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// header: model,horizon_us,cutoff,fpr,tpr
void write_roc_csv(const std::string& path, const std::string& model,
                   std::int64_t horizon_us, const std::vector<RocPoint>& roc);

}  // namespace toxflow
