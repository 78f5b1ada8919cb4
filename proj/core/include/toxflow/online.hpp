#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>

#include "toxflow/errors.hpp"
#include "toxflow/labeler.hpp"
#include "toxflow/market_data.hpp"

namespace toxflow {

// ============================================================================
// Asynchronous predict-update protocol. A trade's label is only usable once
// its resolution time has passed, so at each arrival the scheduler first
// applies every pending update whose resolve time is strictly before the
// arrival (in resolve-time order, ties by arrival order), then predicts,
// then queues the new trade. Labels ride in with the arrival; their y is
// hidden inside the queue until release.
//
// Model contract:
//   double predict(const Eigen::VectorXd& x);
//   void update(const Eigen::VectorXd& x, bool y);
//   std::int64_t version() const;   // count of updates applied so far
// ============================================================================

template <class Model>
class AsyncScheduler {
 public:
  explicit AsyncScheduler(Model model) : model_(std::move(model)) {}

  struct Prediction {
    double p = 0;
    std::int64_t params_version = 0;  // version used for this prediction
  };

  Prediction process_arrival(Micros ts, const Eigen::VectorXd& x, const Label& label) {
    if (has_arrival_ && ts < last_ts_) {
      throw DataError("scheduler: out-of-order arrival at ts " + std::to_string(ts) +
                      " after " + std::to_string(last_ts_));
    }
    has_arrival_ = true;
    last_ts_ = ts;
    while (!queue_.empty() && queue_.front().resolve_ts < ts) {
      model_.update(queue_.front().x, queue_.front().y);
      queue_.pop_front();
    }
    Prediction out{model_.predict(x), model_.version()};
    queue_.push_back({label.resolved_ts, x, label.y});
    return out;
  }

  // Sessions close every window, so all remaining labels resolve before the
  // next day's first trade; apply them now and restart the intraday clock.
  void end_of_day() {
    while (!queue_.empty()) {
      model_.update(queue_.front().x, queue_.front().y);
      queue_.pop_front();
    }
    has_arrival_ = false;
    last_ts_ = 0;
  }

  std::size_t pending() const { return queue_.size(); }
  Model& model() { return model_; }
  const Model& model() const { return model_; }

 private:
  struct Pending {
    Micros resolve_ts;
    Eigen::VectorXd x;
    bool y;
  };
  Model model_;
  std::deque<Pending> queue_;
  Micros last_ts_ = 0;
  bool has_arrival_ = false;
};

}  // namespace toxflow
