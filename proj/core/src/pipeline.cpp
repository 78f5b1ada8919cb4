#include "toxflow/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <utility>

#include "toxflow/baselines.hpp"
#include "toxflow/checkpoint.hpp"
#include "toxflow/csv.hpp"
#include "toxflow/errors.hpp"
#include "toxflow/evaluation.hpp"
#include "toxflow/labeler.hpp"
#include "toxflow/online.hpp"
#include "toxflow/pulse.hpp"
#include "toxflow/rng.hpp"
#include "toxflow/strategy.hpp"

namespace toxflow {

namespace fs = std::filesystem;
using nlohmann::json;

// ============================================================================
// Config
// ============================================================================

void RunConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("run: out_dir must not be empty");
  const int n_days = synth ? synth->n_days : static_cast<int>(days.size());
  if (synth) synth->validate();
  if (!synth && days.empty()) {
    throw ConfigError("run: either synth or day file paths must be given");
  }
  if (warmup_days < 1) throw ConfigError("run: warmup_days must be >= 1");
  if (warmup_days >= n_days) {
    throw ConfigError("run: need at least one deploy day after " +
                      std::to_string(warmup_days) + " warmup days, have " +
                      std::to_string(n_days) + " total");
  }
  if (horizons_us.empty()) throw ConfigError("run: horizons_us must not be empty");
  for (Micros g : horizons_us) {
    if (g <= 0) throw ConfigError("run: horizons must be positive");
  }
  if (models.empty()) throw ConfigError("run: models must not be empty");
  for (const auto& m : models) {
    if (m != "pulse" && m != "logreg" && m != "mle") {
      throw ConfigError("run: unknown model '" + m + "'");
    }
  }
  if (hidden.empty()) throw ConfigError("run: hidden layer list must not be empty");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("run: hidden layer widths must be positive");
  }
  warmup.validate();
  if (features.volume_unit <= 0 || features.lot_size <= 0 || features.time_unit <= 0) {
    throw ConfigError("run: feature units must be positive");
  }
  if (strategy.cutoffs.empty()) throw ConfigError("run: cutoff grid must not be empty");
  StrategyConfig probe;
  probe.cutoff = strategy.base_cutoff;
  probe.aversion = strategy.base_aversion;
  probe.fee_per_notional = strategy.fee_per_notional;
  probe.horizon = horizons_us.front();
  probe.validate();
}

namespace {

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return key == k;
        }) == allowed.end()) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

ClockKind clock_from_string(const std::string& s) {
  if (s == "time") return ClockKind::Time;
  if (s == "txn") return ClockKind::Transaction;
  if (s == "vol") return ClockKind::Volume;
  throw ConfigError("config: clock must be one of all|time|txn|vol, got '" + s + "'");
}

std::string clock_to_string(const std::optional<ClockKind>& c) {
  if (!c) return "all";
  switch (*c) {
    case ClockKind::Time: return "time";
    case ClockKind::Transaction: return "txn";
    case ClockKind::Volume: return "vol";
  }
  return "all";
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  require_known_keys(j,
                     {"seed", "out_dir", "synth", "days", "warmup_days",
                      "horizons_us", "models", "hidden", "warmup", "features",
                      "strategy", "per_client", "include_censored", "features_csv"},
                     "config");
  RunConfig cfg;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("synth")) cfg.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("days")) {
    cfg.days.clear();
    for (const auto& d : j.at("days")) {
      require_known_keys(d, {"quotes", "trades"}, "days[]");
      cfg.days.push_back(
          {d.at("quotes").get<std::string>(), d.at("trades").get<std::string>()});
    }
  }
  if (j.contains("warmup_days")) cfg.warmup_days = j.at("warmup_days").get<int>();
  if (j.contains("horizons_us")) {
    cfg.horizons_us = j.at("horizons_us").get<std::vector<Micros>>();
  }
  if (j.contains("models")) {
    cfg.models = j.at("models").get<std::vector<std::string>>();
  }
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("warmup")) {
    const json& w = j.at("warmup");
    require_known_keys(w,
                       {"epochs", "skip", "thin", "subspace_dim", "alpha",
                        "batch_size", "sigma2_w", "sigma2_z"},
                       "warmup");
    if (w.contains("epochs")) cfg.warmup.epochs = w.at("epochs").get<int>();
    if (w.contains("skip")) cfg.warmup.skip = w.at("skip").get<int>();
    if (w.contains("thin")) cfg.warmup.thin = w.at("thin").get<int>();
    if (w.contains("subspace_dim")) {
      cfg.warmup.subspace_dim = w.at("subspace_dim").get<int>();
    }
    if (w.contains("alpha")) cfg.warmup.alpha = w.at("alpha").get<double>();
    if (w.contains("batch_size")) cfg.warmup.batch_size = w.at("batch_size").get<int>();
    if (w.contains("sigma2_w")) cfg.warmup.sigma2_w = w.at("sigma2_w").get<double>();
    if (w.contains("sigma2_z")) cfg.warmup.sigma2_z = w.at("sigma2_z").get<double>();
  }
  if (j.contains("features")) {
    const json& f = j.at("features");
    require_known_keys(
        f, {"clock", "client_features", "lot_size", "volume_unit", "time_unit_us"},
        "features");
    if (f.contains("clock")) {
      const auto s = f.at("clock").get<std::string>();
      cfg.features.clock_ablation =
          s == "all" ? std::nullopt : std::optional<ClockKind>(clock_from_string(s));
    }
    if (f.contains("client_features")) {
      cfg.features.client_features = f.at("client_features").get<bool>();
    }
    if (f.contains("lot_size")) cfg.features.lot_size = f.at("lot_size").get<double>();
    if (f.contains("volume_unit")) {
      cfg.features.volume_unit = f.at("volume_unit").get<double>();
    }
    if (f.contains("time_unit_us")) {
      cfg.features.time_unit = f.at("time_unit_us").get<Micros>();
    }
  }
  if (j.contains("strategy")) {
    const json& s = j.at("strategy");
    require_known_keys(s,
                       {"cutoffs", "aversions", "fee_per_notional", "base_cutoff",
                        "base_aversion"},
                       "strategy");
    if (s.contains("cutoffs")) {
      cfg.strategy.cutoffs = s.at("cutoffs").get<std::vector<double>>();
    }
    if (s.contains("aversions")) {
      cfg.strategy.aversions = s.at("aversions").get<std::vector<double>>();
    }
    if (s.contains("fee_per_notional")) {
      cfg.strategy.fee_per_notional = s.at("fee_per_notional").get<double>();
    }
    if (s.contains("base_cutoff")) {
      cfg.strategy.base_cutoff = s.at("base_cutoff").get<double>();
    }
    if (s.contains("base_aversion")) {
      cfg.strategy.base_aversion = s.at("base_aversion").get<double>();
    }
  }
  if (j.contains("per_client")) cfg.per_client = j.at("per_client").get<bool>();
  if (j.contains("include_censored")) {
    cfg.include_censored = j.at("include_censored").get<bool>();
  }
  if (j.contains("features_csv")) cfg.features_csv = j.at("features_csv").get<bool>();
  cfg.validate();
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  if (cfg.synth) j["synth"] = synth_config_to_json(*cfg.synth);
  if (!cfg.days.empty()) {
    json days = json::array();
    for (const auto& d : cfg.days) {
      days.push_back({{"quotes", d.quotes}, {"trades", d.trades}});
    }
    j["days"] = days;
  }
  j["warmup_days"] = cfg.warmup_days;
  j["horizons_us"] = cfg.horizons_us;
  j["models"] = cfg.models;
  j["hidden"] = cfg.hidden;
  j["warmup"] = {{"epochs", cfg.warmup.epochs},
                 {"skip", cfg.warmup.skip},
                 {"thin", cfg.warmup.thin},
                 {"subspace_dim", cfg.warmup.subspace_dim},
                 {"alpha", cfg.warmup.alpha},
                 {"batch_size", cfg.warmup.batch_size},
                 {"sigma2_w", cfg.warmup.sigma2_w},
                 {"sigma2_z", cfg.warmup.sigma2_z}};
  j["features"] = {{"clock", clock_to_string(cfg.features.clock_ablation)},
                   {"client_features", cfg.features.client_features},
                   {"lot_size", cfg.features.lot_size},
                   {"volume_unit", cfg.features.volume_unit},
                   {"time_unit_us", cfg.features.time_unit}};
  j["strategy"] = {{"cutoffs", cfg.strategy.cutoffs},
                   {"aversions", cfg.strategy.aversions},
                   {"fee_per_notional", cfg.strategy.fee_per_notional},
                   {"base_cutoff", cfg.strategy.base_cutoff},
                   {"base_aversion", cfg.strategy.base_aversion}};
  j["per_client"] = cfg.per_client;
  j["include_censored"] = cfg.include_censored;
  j["features_csv"] = cfg.features_csv;
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  RunConfig cfg = run_config_from_json(j);
  if (const char* out = std::getenv("TOXFLOW_OUT"); out != nullptr && *out != '\0') {
    cfg.out_dir = out;
  }
  return cfg;
}

// ============================================================================
// Artifact plumbing
// ============================================================================

namespace {

std::string day_tag(int day) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "day_%03d", day);
  return buf;
}

std::string htag(Micros g) { return "h" + std::to_string(g); }

// Artifact paths are tracked relative to out_dir; this resolves and creates
// the parent directory.
std::string opath(const RunConfig& cfg, const std::string& rel) {
  const fs::path p = fs::path(cfg.out_dir) / rel;
  fs::create_directories(p.parent_path());
  return p.string();
}

int total_days(const RunConfig& cfg) {
  return cfg.synth ? cfg.synth->n_days : static_cast<int>(cfg.days.size());
}

std::string sanitize_name(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("_") : out;
}

struct TapeIndex {
  std::vector<DayFiles> days;  // resolved, as stored in index.json
  std::vector<std::string> clients;
};

void save_index(const RunConfig& cfg, const TapeIndex& idx) {
  json j;
  j["clients"] = idx.clients;
  json days = json::array();
  for (const auto& d : idx.days) {
    days.push_back({{"quotes", d.quotes}, {"trades", d.trades}});
  }
  j["days"] = days;
  std::ofstream out(opath(cfg, "tape/index.json"));
  out << j.dump(2) << "\n";
}

TapeIndex load_index(const RunConfig& cfg) {
  const std::string path = fs::path(cfg.out_dir) / "tape/index.json";
  std::ifstream in(path);
  if (!in) {
    throw DataError("pipeline: missing " + path + " (run the generate stage first)");
  }
  json j;
  in >> j;
  TapeIndex idx;
  idx.clients = j.at("clients").get<std::vector<std::string>>();
  for (const auto& d : j.at("days")) {
    idx.days.push_back(
        {d.at("quotes").get<std::string>(), d.at("trades").get<std::string>()});
  }
  return idx;
}

// Day paths in index.json are relative to out_dir when the tape lives there
// (always true for synthesized data); ingested paths are kept as given.
std::string resolve_day_path(const RunConfig& cfg, const std::string& p) {
  if (fs::path(p).is_absolute()) return p;
  const fs::path in_out = fs::path(cfg.out_dir) / p;
  return fs::exists(in_out) ? in_out.string() : p;
}

std::vector<Tape> load_tapes(const RunConfig& cfg, const TapeIndex& idx) {
  std::vector<std::string> registry = idx.clients;
  std::vector<Tape> tapes;
  for (std::size_t d = 0; d < idx.days.size(); ++d) {
    tapes.push_back(load_tape(resolve_day_path(cfg, idx.days[d].quotes),
                              resolve_day_path(cfg, idx.days[d].trades),
                              static_cast<int>(d), &registry));
  }
  if (registry != idx.clients) {
    throw DataError("pipeline: client registry drifted from tape/index.json");
  }
  return tapes;
}

std::string labels_rel(Micros g, int day) {
  return "labels/" + htag(g) + "/" + day_tag(day) + ".csv";
}
std::string features_rel(Micros g, int day) {
  return "features/" + htag(g) + "/" + day_tag(day) + ".txf";
}

// Per-day feature tensors: X (dim x n), plus per-trade ts/client/side/qty.
void save_day_features(const std::string& path, int day_id,
                       const std::vector<const FeatureRow*>& rows, int dim) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(dim, n);
  Eigen::VectorXd ts(n), client(n), side(n), qty(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const FeatureRow& r = *rows[static_cast<std::size_t>(i)];
    if (static_cast<int>(r.x.size()) != dim) {
      throw DataError("features: row dimension mismatch");
    }
    X.col(i) = Eigen::Map<const Eigen::VectorXd>(r.x.data(), dim);
    ts(i) = static_cast<double>(r.ts);
    client(i) = static_cast<double>(r.client);
    side(i) = r.side == Side::Buy ? 1.0 : 0.0;
    qty(i) = r.qty;
  }
  json meta;
  meta["kind"] = "features";
  meta["day_id"] = day_id;
  meta["dim"] = dim;
  save_checkpoint(path, meta,
                  {blob_mat("X", X), blob_vec("ts", ts), blob_vec("client", client),
                   blob_vec("side", side), blob_vec("qty", qty)});
}

struct DayFeatures {
  int day_id = 0;
  Eigen::MatrixXd X;
  std::vector<Micros> ts;
  std::vector<std::uint32_t> client;
  std::vector<Side> side;
  std::vector<double> qty;

  Eigen::Index n() const { return X.cols(); }
};

DayFeatures load_day_features(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "features") {
    throw DataError("features: " + path + " is not a feature file");
  }
  DayFeatures f;
  f.day_id = ck.meta.at("day_id").get<int>();
  f.X = tensor_matrix(ck.tensor("X"));
  const Eigen::VectorXd ts = tensor_vector(ck.tensor("ts"));
  const Eigen::VectorXd client = tensor_vector(ck.tensor("client"));
  const Eigen::VectorXd side = tensor_vector(ck.tensor("side"));
  const Eigen::VectorXd qty = tensor_vector(ck.tensor("qty"));
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    f.ts.push_back(static_cast<Micros>(ts(i)));
    f.client.push_back(static_cast<std::uint32_t>(client(i)));
    f.side.push_back(side(i) == 1.0 ? Side::Buy : Side::Sell);
    f.qty.push_back(qty(i));
  }
  return f;
}

// Model stacks are either universal or scoped to one client.
struct Scope {
  std::string suffix;                   // "" or ".c<idx>" for checkpoint names
  std::string label;                    // "" or "@<client>" for model names
  std::optional<std::uint32_t> client;  // trade filter
};

std::vector<Scope> scopes_for(const RunConfig& cfg, const TapeIndex& idx) {
  std::vector<Scope> scopes;
  if (!cfg.per_client) {
    scopes.push_back({"", "", std::nullopt});
    return scopes;
  }
  for (std::size_t c = 0; c < idx.clients.size(); ++c) {
    scopes.push_back({".c" + std::to_string(c),
                      "@" + sanitize_name(idx.clients[c]),
                      static_cast<std::uint32_t>(c)});
  }
  return scopes;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Sequential matcher: prediction rows are a subsequence of the day's trades
// in arrival order; returns the matched trade index for each row.
std::vector<std::size_t> match_rows_to_trades(
    const CsvTable& preds, const Tape& tape,
    const std::vector<std::string>& clients, const std::string& where) {
  const int c_ts = preds.column("ts_us");
  const int c_client = preds.column("client_id");
  const int c_side = preds.column("side");
  if (c_ts < 0 || c_client < 0 || c_side < 0) {
    throw DataError(where + ": prediction file missing schema columns");
  }
  std::vector<std::size_t> out;
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < preds.rows.size(); ++r) {
    const auto& row = preds.rows[r];
    const Micros ts = parse_i64(row[static_cast<std::size_t>(c_ts)], where);
    const std::string& client = row[static_cast<std::size_t>(c_client)];
    const Side side =
        row[static_cast<std::size_t>(c_side)] == "B" ? Side::Buy : Side::Sell;
    while (cursor < tape.trades.size()) {
      const TradeEvent& tr = tape.trades[cursor];
      if (tr.ts == ts && clients[tr.client] == client && tr.side == side) break;
      ++cursor;
    }
    if (cursor == tape.trades.size()) {
      throw DataError(where + ": prediction row " + std::to_string(r + 2) +
                      " does not match any remaining trade");
    }
    out.push_back(cursor);
    ++cursor;
  }
  return out;
}

std::vector<std::string> model_dirs_in(const std::string& dir) {
  std::vector<std::string> names;
  if (!fs::exists(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

// ============================================================================
// Stages
// ============================================================================

std::vector<std::string> stage_generate(const RunConfig& cfg) {
  cfg.validate();
  std::vector<std::string> artifacts;
  TapeIndex idx;
  if (cfg.synth) {
    const std::vector<Tape> tapes = generate_tapes(*cfg.synth);
    for (const Tape& tape : tapes) {
      const std::string q_rel = "tape/" + day_tag(tape.day_id) + ".quotes.csv";
      const std::string t_rel = "tape/" + day_tag(tape.day_id) + ".trades.csv";
      save_tape_csv(tape, opath(cfg, q_rel), opath(cfg, t_rel));
      idx.days.push_back({q_rel, t_rel});
      artifacts.push_back(q_rel);
      artifacts.push_back(t_rel);
    }
    std::ofstream preset(opath(cfg, "tape/synth.json"));
    preset << synth_config_to_json(*cfg.synth).dump(2) << "\n";
    artifacts.push_back("tape/synth.json");
  } else {
    idx.days = cfg.days;  // ingest in place; loading below validates
  }
  // Build the shared client registry by loading every day back in order, so
  // later stages see exactly the indexing that loading produces.
  std::vector<std::string> registry;
  for (std::size_t d = 0; d < idx.days.size(); ++d) {
    load_tape(resolve_day_path(cfg, idx.days[d].quotes),
              resolve_day_path(cfg, idx.days[d].trades), static_cast<int>(d),
              &registry);
  }
  idx.clients = registry;
  save_index(cfg, idx);
  artifacts.push_back("tape/index.json");
  return artifacts;
}

std::vector<std::string> stage_label(const RunConfig& cfg) {
  cfg.validate();
  const TapeIndex idx = load_index(cfg);
  const std::vector<Tape> tapes = load_tapes(cfg, idx);
  std::vector<std::string> artifacts;
  for (Micros g : cfg.horizons_us) {
    const Horizon h{g};
    for (const Tape& tape : tapes) {
      const std::vector<Label> labels = label_tape(tape, h);
      const std::string rel = labels_rel(g, tape.day_id);
      write_labels_csv(tape, labels, h, opath(cfg, rel));
      artifacts.push_back(rel);
    }
  }
  return artifacts;
}

std::vector<std::string> stage_featurize(const RunConfig& cfg) {
  cfg.validate();
  const TapeIndex idx = load_index(cfg);
  const std::vector<Tape> tapes = load_tapes(cfg, idx);
  std::vector<std::string> artifacts;
  for (Micros g : cfg.horizons_us) {
    std::vector<std::vector<Label>> labels;
    for (const Tape& tape : tapes) {
      labels.push_back(load_labels_csv(
          (fs::path(cfg.out_dir) / labels_rel(g, tape.day_id)).string(), Horizon{g},
          tape));
    }
    const std::vector<FeatureRow> rows =
        featurize_tapes(tapes, labels, cfg.features, idx.clients.size());
    for (const Tape& tape : tapes) {
      std::vector<const FeatureRow*> day_rows;
      std::vector<FeatureRow> day_copy;  // for the optional CSV dump
      for (const FeatureRow& r : rows) {
        if (r.day_id == tape.day_id) {
          day_rows.push_back(&r);
          if (cfg.features_csv) day_copy.push_back(r);
        }
      }
      const std::string rel = features_rel(g, tape.day_id);
      save_day_features(opath(cfg, rel), tape.day_id, day_rows, cfg.features.dim());
      artifacts.push_back(rel);
      if (cfg.features_csv) {
        const std::string csv_rel =
            "features/" + htag(g) + "/" + day_tag(tape.day_id) + ".csv";
        write_features_csv(day_copy, idx.clients, opath(cfg, csv_rel));
        artifacts.push_back(csv_rel);
      }
    }
  }
  return artifacts;
}

std::vector<std::string> stage_warmup(const RunConfig& cfg) {
  cfg.validate();
  const TapeIndex idx = load_index(cfg);
  const std::vector<Tape> tapes = load_tapes(cfg, idx);
  std::vector<std::string> artifacts;

  for (Micros g : cfg.horizons_us) {
    // Assemble the warmup set in arrival order across the warmup days.
    std::vector<DayFeatures> days;
    std::vector<std::vector<Label>> labels;
    Eigen::Index n_total = 0;
    for (int d = 0; d < cfg.warmup_days; ++d) {
      days.push_back(
          load_day_features((fs::path(cfg.out_dir) / features_rel(g, d)).string()));
      labels.push_back(load_labels_csv(
          (fs::path(cfg.out_dir) / labels_rel(g, d)).string(), Horizon{g},
          tapes[static_cast<std::size_t>(d)]));
      n_total += days.back().n();
    }
    const int dim = cfg.features.dim();

    for (const Scope& scope : scopes_for(cfg, idx)) {
      // Column selection for this scope.
      std::vector<std::pair<int, Eigen::Index>> sel;  // (day, col)
      for (std::size_t d = 0; d < days.size(); ++d) {
        for (Eigen::Index i = 0; i < days[d].n(); ++i) {
          if (!scope.client || days[d].client[static_cast<std::size_t>(i)] ==
                                   *scope.client) {
            sel.emplace_back(static_cast<int>(d), i);
          }
        }
      }
      if (sel.empty()) {
        std::cerr << "warmup: no " << htag(g) << " trades for scope '"
                  << scope.label << "'; skipping\n";
        continue;
      }
      Eigen::MatrixXd X(dim, static_cast<Eigen::Index>(sel.size()));
      Eigen::VectorXd y(static_cast<Eigen::Index>(sel.size()));
      std::int64_t successes = 0;
      for (Eigen::Index k = 0; k < X.cols(); ++k) {
        const auto [d, i] = sel[static_cast<std::size_t>(k)];
        X.col(k) = days[static_cast<std::size_t>(d)].X.col(i);
        const bool toxic =
            labels[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)].y;
        y(k) = toxic ? 1.0 : 0.0;
        successes += toxic;
      }

      MlpArch arch;
      arch.input_dim = dim;
      arch.hidden = cfg.hidden;
      WarmupConfig wu = cfg.warmup;
      wu.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(g),
                         scope.client ? 0x900 + *scope.client : 0x1);

      const WarmupResult res = run_warmup(arch, X, y, wu);
      const std::string sub_rel =
          "checkpoints/" + htag(g) + "/subspace" + scope.suffix + ".txf";
      save_subspace(opath(cfg, sub_rel), res.model);
      artifacts.push_back(sub_rel);

      // Frozen logistic benchmark on the same standardized warmup set.
      const Eigen::MatrixXd Xs = res.model.standardizer.apply(X);
      const LogRModel logr = fit_logreg(Xs, y);
      json lmeta;
      lmeta["kind"] = "logreg";
      lmeta["horizon_us"] = g;
      lmeta["converged"] = logr.converged;
      lmeta["iterations"] = logr.iterations;
      lmeta["final_nll"] = logr.final_nll;
      const std::string log_rel =
          "checkpoints/" + htag(g) + "/logreg" + scope.suffix + ".txf";
      save_checkpoint(opath(cfg, log_rel), lmeta,
                      {blob_vec("w", logr.w),
                       blob_vec("std_mean", res.model.standardizer.mean),
                       blob_vec("std_scale", res.model.standardizer.scale)});
      artifacts.push_back(log_rel);
      if (!logr.converged) {
        std::cerr << "warmup: logreg" << scope.label << " " << htag(g)
                  << " hit the iteration cap (flagged, not fatal)\n";
      }

      // Running-rate benchmark warm-started from the warmup label counts.
      json mle;
      mle["kind"] = "mle_counts";
      mle["horizon_us"] = g;
      mle["success"] = successes;
      mle["total"] = static_cast<std::int64_t>(sel.size());
      const std::string mle_rel =
          "checkpoints/" + htag(g) + "/mle" + scope.suffix + ".json";
      std::ofstream mout(opath(cfg, mle_rel));
      mout << mle.dump(2) << "\n";
      artifacts.push_back(mle_rel);

      json summary;
      summary["horizon_us"] = g;
      summary["scope"] = scope.label.empty() ? "universal" : scope.label;
      summary["n_samples"] = static_cast<std::int64_t>(sel.size());
      summary["init_nll"] = res.init_loss;
      summary["final_nll"] = res.final_loss;
      summary["logreg_nll"] = logr.final_nll;
      const std::string sum_rel =
          "checkpoints/" + htag(g) + "/warmup_summary" + scope.suffix + ".json";
      std::ofstream sout(opath(cfg, sum_rel));
      sout << summary.dump(2) << "\n";
      artifacts.push_back(sum_rel);
    }
    (void)n_total;
  }
  return artifacts;
}

namespace {

// LogR applies the warmup standardization inside the model, so every model
// still receives the identical raw feature stream.
struct StdLogROnline {
  LogRModel model;
  Standardizer std_;

  double predict(const Eigen::VectorXd& x) const {
    Eigen::VectorXd z = x;
    std_.apply_inplace(z);
    return model.predict(z);
  }
  void update(const Eigen::VectorXd&, bool) {}
  std::int64_t version() const { return 0; }
};

// Type-erased model so one scheduler type drives all benchmark stacks.
class AnyModel {
 public:
  template <class M>
  explicit AnyModel(M m) : self_(std::make_shared<Holder<M>>(std::move(m))) {}

  double predict(const Eigen::VectorXd& x) { return self_->do_predict(x); }
  void update(const Eigen::VectorXd& x, bool y) { self_->do_update(x, y); }
  std::int64_t version() const { return self_->do_version(); }

  template <class M>
  const M* as() const {
    auto* h = dynamic_cast<const Holder<M>*>(self_.get());
    return h ? &h->m : nullptr;
  }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual double do_predict(const Eigen::VectorXd&) = 0;
    virtual void do_update(const Eigen::VectorXd&, bool) = 0;
    virtual std::int64_t do_version() const = 0;
  };
  template <class M>
  struct Holder final : Concept {
    explicit Holder(M mm) : m(std::move(mm)) {}
    double do_predict(const Eigen::VectorXd& x) override { return m.predict(x); }
    void do_update(const Eigen::VectorXd& x, bool y) override { m.update(x, y); }
    std::int64_t do_version() const override { return m.version(); }
    M m;
  };
  std::shared_ptr<Concept> self_;
};

struct DeployUnit {
  std::string name;  // e.g. "pulse", "logreg@K3"
  Scope scope;
  std::unique_ptr<AsyncScheduler<AnyModel>> sched;
  std::shared_ptr<SubspaceModel> subspace;  // keeps PulseOnline's pointer alive
};

}  // namespace

std::vector<std::string> stage_deploy(const RunConfig& cfg) {
  cfg.validate();
  const TapeIndex idx = load_index(cfg);
  const std::vector<Tape> tapes = load_tapes(cfg, idx);
  std::vector<std::string> artifacts;

  for (Micros g : cfg.horizons_us) {
    // Build one scheduler per (model, scope) whose warmup artifacts exist.
    std::vector<DeployUnit> units;
    for (const Scope& scope : scopes_for(cfg, idx)) {
      const std::string base = "checkpoints/" + htag(g) + "/";
      const std::string sub_path =
          (fs::path(cfg.out_dir) / (base + "subspace" + scope.suffix + ".txf"))
              .string();
      if (!fs::exists(sub_path)) continue;  // scope had no warmup trades
      for (const std::string& model : cfg.models) {
        DeployUnit unit;
        unit.name = model + scope.label;
        unit.scope = scope;
        if (model == "pulse") {
          unit.subspace = std::make_shared<SubspaceModel>(load_subspace(sub_path));
          unit.sched = std::make_unique<AsyncScheduler<AnyModel>>(
              AnyModel(PulseOnline(init_priors(*unit.subspace), unit.subspace.get())));
        } else if (model == "logreg") {
          const Checkpoint ck = load_checkpoint(
              (fs::path(cfg.out_dir) / (base + "logreg" + scope.suffix + ".txf"))
                  .string());
          StdLogROnline lr;
          lr.model.w = tensor_vector(ck.tensor("w"));
          lr.model.converged = ck.meta.value("converged", false);
          lr.std_.mean = tensor_vector(ck.tensor("std_mean"));
          lr.std_.scale = tensor_vector(ck.tensor("std_scale"));
          unit.sched = std::make_unique<AsyncScheduler<AnyModel>>(AnyModel(lr));
        } else {  // mle
          std::ifstream in(
              (fs::path(cfg.out_dir) / (base + "mle" + scope.suffix + ".json"))
                  .string());
          if (!in) throw DataError("deploy: missing MLE counts for " + htag(g));
          json j;
          in >> j;
          MleState counts{j.at("success").get<std::int64_t>(),
                          j.at("total").get<std::int64_t>()};
          unit.sched =
              std::make_unique<AsyncScheduler<AnyModel>>(AnyModel(MleOnline(counts)));
        }
        units.push_back(std::move(unit));
      }
    }
    if (units.empty()) throw DataError("deploy: no warmup checkpoints for " + htag(g));

    for (int d = cfg.warmup_days; d < total_days(cfg); ++d) {
      const Tape& tape = tapes[static_cast<std::size_t>(d)];
      const DayFeatures feats =
          load_day_features((fs::path(cfg.out_dir) / features_rel(g, d)).string());
      const std::vector<Label> labels = load_labels_csv(
          (fs::path(cfg.out_dir) / labels_rel(g, d)).string(), Horizon{g}, tape);
      if (feats.n() != static_cast<Eigen::Index>(labels.size())) {
        throw DataError("deploy: features/labels misaligned on " + day_tag(d));
      }
      for (DeployUnit& unit : units) {
        const std::string rel =
            "predictions/" + htag(g) + "/" + unit.name + "/" + day_tag(d) + ".csv";
        CsvWriter out(opath(cfg, rel),
                      "ts_us,client_id,side,horizon_us,p_toxic,params_version");
        for (Eigen::Index i = 0; i < feats.n(); ++i) {
          const auto ui = static_cast<std::size_t>(i);
          if (unit.scope.client && feats.client[ui] != *unit.scope.client) continue;
          const auto pred = unit.sched->process_arrival(feats.ts[ui], feats.X.col(i),
                                                        labels[ui]);
          out.write_row({std::to_string(feats.ts[ui]),
                         idx.clients.at(feats.client[ui]),
                         feats.side[ui] == Side::Buy ? "B" : "S", std::to_string(g),
                         format_f64(pred.p), std::to_string(pred.params_version)});
        }
        out.close();
        unit.sched->end_of_day();
        artifacts.push_back(rel);
      }
    }

    // Posterior snapshots for the filter stacks.
    for (DeployUnit& unit : units) {
      if (const auto* pulse = unit.sched->model().as<PulseOnline>()) {
        const PulsePosterior& post = pulse->posterior();
        json meta;
        meta["kind"] = "pulse_posterior";
        meta["horizon_us"] = g;
        meta["update_count"] = post.update_count;
        const std::string rel = "checkpoints/" + htag(g) + "/pulse_final" +
                                unit.scope.suffix + ".txf";
        save_checkpoint(opath(cfg, rel), meta,
                        {blob_vec("nu", post.nu), blob_mat("Sigma", post.Sigma),
                         blob_vec("mu", post.mu), blob_mat("Gamma", post.Gamma)});
        artifacts.push_back(rel);
      }
    }
  }
  return artifacts;
}

std::vector<std::string> stage_evaluate(const RunConfig& cfg) {
  cfg.validate();
  const TapeIndex idx = load_index(cfg);
  const std::vector<Tape> tapes = load_tapes(cfg, idx);
  std::vector<std::string> artifacts;

  std::vector<MetricsRow> metrics;
  struct EwmaRow {
    std::string model;
    Micros g;
    int day_id;
    double value;
  };
  std::vector<EwmaRow> ewma_rows;
  std::vector<std::string> roc_files;

  for (Micros g : cfg.horizons_us) {
    const std::string pred_dir =
        (fs::path(cfg.out_dir) / ("predictions/" + htag(g))).string();
    for (const std::string& model : model_dirs_in(pred_dir)) {
      std::vector<ScoredTrade> scored;
      for (int d = cfg.warmup_days; d < total_days(cfg); ++d) {
        const std::string pred_path =
            (fs::path(pred_dir) / model / (day_tag(d) + ".csv")).string();
        if (!fs::exists(pred_path)) continue;
        const CsvTable preds = read_csv(pred_path);
        const Tape& tape = tapes[static_cast<std::size_t>(d)];
        const std::vector<Label> labels = load_labels_csv(
            (fs::path(cfg.out_dir) / labels_rel(g, d)).string(), Horizon{g}, tape);
        const std::vector<std::size_t> trade_idx =
            match_rows_to_trades(preds, tape, idx.clients, pred_path);
        const int c_p = preds.column("p_toxic");
        if (c_p < 0) throw DataError(pred_path + ": missing p_toxic column");
        for (std::size_t r = 0; r < preds.rows.size(); ++r) {
          ScoredTrade s;
          s.p = parse_f64(preds.rows[r][static_cast<std::size_t>(c_p)], pred_path);
          s.y = labels[trade_idx[r]].y;
          s.censored = labels[trade_idx[r]].censored;
          s.ts = tape.trades[trade_idx[r]].ts;
          s.day_id = tape.day_id;
          scored.push_back(s);
        }
      }
      if (scored.empty()) continue;

      const std::vector<DailyAuc> daily = daily_auc(scored, cfg.include_censored);
      for (const DailyAuc& row : daily) {
        metrics.push_back({row.day_id, model, g, row.auc, row.n_trades});
      }
      std::vector<double> series;
      for (const DailyAuc& row : daily) series.push_back(row.auc);
      const std::vector<double> smoothed = ewma_series(series);
      for (std::size_t k = 0; k < smoothed.size(); ++k) {
        ewma_rows.push_back({model, g, daily[k].day_id, smoothed[k]});
      }

      // Pooled ROC over the whole deploy window, plus the daily average on
      // the fixed FPR grid.
      try {
        std::vector<ScoredTrade> pooled = scored;
        if (!cfg.include_censored) {
          std::erase_if(pooled, [](const ScoredTrade& s) { return s.censored; });
        }
        const std::string roc_rel = "metrics/roc_" + model + "_" + htag(g) + ".csv";
        write_roc_csv(opath(cfg, roc_rel), model, g, roc_curve(pooled));
        artifacts.push_back(roc_rel);

        const GridRoc grid = average_daily_roc(scored, 101, cfg.include_censored);
        const std::string avg_rel =
            "metrics/roc_daily_avg_" + model + "_" + htag(g) + ".csv";
        CsvWriter w(opath(cfg, avg_rel), "model,horizon_us,fpr,tpr");
        for (std::size_t k = 0; k < grid.fpr.size(); ++k) {
          w.write_row({model, std::to_string(g), format_f64(grid.fpr[k]),
                       format_f64(grid.tpr[k])});
        }
        w.close();
        artifacts.push_back(avg_rel);
      } catch (const DataError& e) {
        std::cerr << "evaluate: skipping ROC for " << model << " " << htag(g) << ": "
                  << e.what() << "\n";
      }
    }
  }

  std::sort(metrics.begin(), metrics.end(), [](const auto& a, const auto& b) {
    return std::tie(a.horizon_us, a.model, a.day_id) <
           std::tie(b.horizon_us, b.model, b.day_id);
  });
  write_metrics_csv(opath(cfg, "metrics/metrics.csv"), metrics);
  artifacts.push_back("metrics/metrics.csv");

  CsvWriter ew(opath(cfg, "metrics/ewma.csv"), "model,horizon_us,day_id,auc_ewma");
  std::sort(ewma_rows.begin(), ewma_rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.g, a.model, a.day_id) < std::tie(b.g, b.model, b.day_id);
  });
  for (const auto& r : ewma_rows) {
    ew.write_row({r.model, std::to_string(r.g), std::to_string(r.day_id),
                  format_f64(r.value)});
  }
  ew.close();
  artifacts.push_back("metrics/ewma.csv");
  return artifacts;
}

std::vector<std::string> stage_backtest(const RunConfig& cfg) {
  cfg.validate();
  const TapeIndex idx = load_index(cfg);
  const std::vector<Tape> tapes = load_tapes(cfg, idx);
  std::vector<std::string> artifacts;
  std::vector<SweepRow> sweep;

  for (Micros g : cfg.horizons_us) {
    const std::string pred_dir =
        (fs::path(cfg.out_dir) / ("predictions/" + htag(g))).string();
    for (const std::string& model : model_dirs_in(pred_dir)) {
      // Per deploy day: the scored sub-tape (all trades in universal mode).
      struct DayData {
        Tape tape;
        std::vector<double> preds;
      };
      std::vector<DayData> day_data;
      for (int d = cfg.warmup_days; d < total_days(cfg); ++d) {
        const std::string pred_path =
            (fs::path(pred_dir) / model / (day_tag(d) + ".csv")).string();
        if (!fs::exists(pred_path)) continue;
        const CsvTable preds = read_csv(pred_path);
        const Tape& tape = tapes[static_cast<std::size_t>(d)];
        const std::vector<std::size_t> trade_idx =
            match_rows_to_trades(preds, tape, idx.clients, pred_path);
        const int c_p = preds.column("p_toxic");
        if (c_p < 0) throw DataError(pred_path + ": missing p_toxic column");
        DayData dd;
        dd.tape.day_id = tape.day_id;
        dd.tape.quotes = tape.quotes;
        dd.tape.clients = tape.clients;
        for (std::size_t r = 0; r < preds.rows.size(); ++r) {
          dd.tape.trades.push_back(tape.trades[trade_idx[r]]);
          dd.preds.push_back(
              parse_f64(preds.rows[r][static_cast<std::size_t>(c_p)], pred_path));
        }
        day_data.push_back(std::move(dd));
      }
      if (day_data.empty()) continue;

      // Grid sweep plus the persisted base configuration.
      std::vector<std::pair<double, double>> grid;
      for (double cutoff : cfg.strategy.cutoffs) {
        for (double aversion : cfg.strategy.aversions) {
          grid.emplace_back(cutoff, aversion);
        }
      }
      grid.emplace_back(cfg.strategy.base_cutoff, cfg.strategy.base_aversion);

      for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const bool is_base = gi + 1 == grid.size();
        StrategyConfig scfg;
        scfg.cutoff = grid[gi].first;
        scfg.aversion = grid[gi].second;
        scfg.horizon = g;
        scfg.fee_per_notional = cfg.strategy.fee_per_notional;

        double pnl = 0, avoided_pnl = 0, avoided_loss = 0;
        double volume = 0, int_volume = 0;
        std::size_t n_trades = 0, n_internalised = 0;
        json daily_volume = json::array();
        for (const auto& dd : day_data) {
          const BacktestLedger led = run_backtest(dd.tape, dd.preds, scfg);
          pnl += led.total_pnl_usd;
          avoided_pnl += led.total_avoided_pnl_usd;
          avoided_loss += led.total_avoided_loss_usd;
          volume += led.total_volume_qty;
          int_volume += led.internalised_volume_qty;
          n_trades += led.rows.size();
          n_internalised += led.n_internalised;
          if (is_base) {
            daily_volume.push_back({{"day_id", led.day_id},
                                    {"volume_qty", led.total_volume_qty}});
            const std::string led_rel = "backtest/ledger_" + model + "_" + htag(g) +
                                        "_" + day_tag(led.day_id) + ".csv";
            write_ledger_csv(opath(cfg, led_rel), dd.tape, led);
            artifacts.push_back(led_rel);
          }
        }
        const double pct = volume > 0 ? 100.0 * int_volume / volume : 0.0;
        if (is_base) {
          json summary;
          summary["model"] = model;
          summary["horizon_us"] = g;
          summary["cutoff"] = scfg.cutoff;
          summary["aversion"] = scfg.aversion;
          summary["fee_per_notional"] = scfg.fee_per_notional;
          summary["total_pnl_usd"] = pnl;
          summary["total_avoided_pnl_usd"] = avoided_pnl;
          summary["total_avoided_loss_usd"] = avoided_loss;
          summary["internalised_volume_pct"] = pct;
          summary["n_trades"] = n_trades;
          summary["n_internalised"] = n_internalised;
          summary["daily_volume"] = daily_volume;
          const std::string sum_rel =
              "backtest/summary_" + model + "_" + htag(g) + ".json";
          std::ofstream out(opath(cfg, sum_rel));
          out << summary.dump(2) << "\n";
          artifacts.push_back(sum_rel);
        } else {
          sweep.push_back(
              {model, g, scfg.cutoff, scfg.aversion, pnl, avoided_loss, pct});
        }
      }
    }
  }

  write_sweep_csv(opath(cfg, "backtest/sweep.csv"), sweep);
  artifacts.push_back("backtest/sweep.csv");
  return artifacts;
}

// ============================================================================
// Full run + manifest
// ============================================================================

RunManifest run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  using Stage = std::vector<std::string> (*)(const RunConfig&);
  const std::pair<const char*, Stage> stages[] = {
      {"generate", stage_generate}, {"label", stage_label},
      {"featurize", stage_featurize}, {"warmup", stage_warmup},
      {"deploy", stage_deploy},     {"evaluate", stage_evaluate},
      {"backtest", stage_backtest}};

  RunManifest manifest;
  for (const auto& [name, fn] : stages) {
    const auto t0 = std::chrono::steady_clock::now();
    StageReport report;
    report.name = name;
    try {
      report.artifacts = fn(cfg);
    } catch (...) {
      std::cerr << "pipeline: stage '" << name << "' failed; artifacts of earlier "
                << "stages are preserved in " << cfg.out_dir << "\n";
      throw;
    }
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.stages.push_back(std::move(report));
  }

  // Run hash: the canonical config plus every artifact's bytes, in sorted
  // path order. Wall-clock times and the output location deliberately stay
  // outside the hash, so equal configs produce equal hashes wherever the
  // run lands.
  std::vector<std::string> all;
  for (const auto& s : manifest.stages) {
    all.insert(all.end(), s.artifacts.begin(), s.artifacts.end());
  }
  std::sort(all.begin(), all.end());
  json hashed_cfg = run_config_to_json(cfg);
  hashed_cfg.erase("out_dir");
  const std::string config_dump = hashed_cfg.dump();
  std::uint64_t h = fnv1a(config_dump.data(), config_dump.size(),
                          1469598103934665603ULL);
  for (const std::string& rel : all) {
    h = fnv1a(rel.data(), rel.size() + 1, h);  // include the NUL separator
    std::ifstream in(fs::path(cfg.out_dir) / rel, std::ios::binary);
    if (!in) throw DataError("manifest: artifact vanished: " + rel);
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
      h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    h = fnv1a("", 1, h);
  }
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  manifest.run_hash = hex;

  json j;
  j["run_hash"] = manifest.run_hash;
  j["toxflow_version"] = "0.1.0";
  j["config"] = run_config_to_json(cfg);
  json stages_json = json::array();
  for (const auto& s : manifest.stages) {
    stages_json.push_back(
        {{"name", s.name}, {"seconds", s.seconds}, {"artifacts", s.artifacts}});
  }
  j["stages"] = stages_json;
  std::ofstream out(opath(cfg, "manifest.json"));
  out << j.dump(2) << "\n";
  return manifest;
}

}  // namespace toxflow
