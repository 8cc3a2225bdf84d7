#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sway/backends.hpp"
#include "sway/corpus.hpp"
#include "sway/mitigation.hpp"
#include "sway/scoring.hpp"
#include "sway/stats.hpp"
#include "sway/taxonomy.hpp"

namespace sway {

struct ConfigError : Error {
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations(std::move(violations)) {}
  std::vector<std::string> violations;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
};

struct ManifestMismatch : Error {
  using Error::Error;
};

struct SampleConfig {
  size_t n = 500;
  std::uint64_t seed = 42;
  bool balanced = false;
};

struct StatsConfig {
  int bootstrap_samples = 5000;
  double alpha = 0.05;
  std::uint64_t seed = 7;
};

struct BackendSpec {
  enum class Type { Stub, Synthetic, Http };
  Type type = Type::Stub;
  std::string id;
  std::string stub_response;  // stub
  SyntheticSpec synthetic;    // synthetic
  HttpBackendConfig http;     // http
};

struct RunConfig {
  DatasetKind dataset = DatasetKind::DebateQa;
  std::string input_path;
  SampleConfig sample;
  std::vector<BackendSpec> backends;
  std::vector<int> conditions;  // taxonomy rows, table order
  MitigationMode mitigation = MitigationMode::None;
  std::string evidence_path;  // empty = no evidence probe
  ScoreParams score;
  StatsConfig stats;
  std::string output_dir;
  std::string cache_path;  // default: <output_dir>/cache.jsonl
  int concurrency = 4;
  double failure_budget = 0.01;
};

namespace detail {

inline nlohmann::json backend_to_json(const BackendSpec& b) {
  nlohmann::json j;
  j["id"] = b.id;
  switch (b.type) {
    case BackendSpec::Type::Stub:
      j["type"] = "stub";
      j["response"] = b.stub_response;
      break;
    case BackendSpec::Type::Synthetic: {
      j["type"] = "synthetic";
      j["seed"] = b.synthetic.base_preference_seed;
      j["beta"] = b.synthetic.beta;
      j["weights"] = b.synthetic.commitment_weights;
      j["evidence_shift"] = b.synthetic.evidence_shift;
      break;
    }
    case BackendSpec::Type::Http:
      j["type"] = "http";
      j["base_url"] = b.http.base_url;
      j["model_name"] = b.http.model_name;
      j["header_template"] = b.http.header_template;
      j["credential_env_var"] = b.http.credential_env_var;
      j["rps_limit"] = b.http.rps_limit;
      j["max_retries"] = b.http.max_retries;
      j["backoff_initial_s"] = b.http.backoff_initial_s;
      j["timeout_s"] = b.http.timeout_s;
      break;
  }
  return j;
}

}  // namespace detail

// Canonical, fully defaulted form. This is what the manifest stores and what
// resume compares against.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = to_string(c.dataset);
  j["input"] = c.input_path;
  j["sample"] = {{"n", c.sample.n},
                 {"seed", c.sample.seed},
                 {"balanced", c.sample.balanced}};
  j["backends"] = nlohmann::json::array();
  for (const auto& b : c.backends)
    j["backends"].push_back(detail::backend_to_json(b));
  j["conditions"] = c.conditions;
  j["mitigation"] = to_string(c.mitigation);
  j["evidence"] = c.evidence_path;
  j["score"] = {{"tau", c.score.tau}, {"log_base", c.score.log_base}};
  j["stats"] = {{"bootstrap_samples", c.stats.bootstrap_samples},
                {"alpha", c.stats.alpha},
                {"seed", c.stats.seed}};
  j["output_dir"] = c.output_dir;
  j["cache_path"] = c.cache_path;
  j["concurrency"] = c.concurrency;
  j["failure_budget"] = c.failure_budget;
  return j;
}

struct ValidatedConfig {
  RunConfig config;
  std::vector<std::string> defaulted;  // fields filled with defaults
};

// Validates a raw config object, applies documented defaults, and reports
// every violation at once rather than stopping at the first.
inline ValidatedConfig validate_config(const nlohmann::json& raw) {
  std::vector<std::string> violations;
  std::vector<std::string> defaulted;
  RunConfig c;

  auto fail = [&](const std::string& msg) { violations.push_back(msg); };

  if (!raw.is_object()) {
    throw ConfigError({"config must be a JSON object"});
  }

  if (raw.contains("dataset")) {
    try {
      c.dataset = dataset_from_string(raw["dataset"].get<std::string>());
    } catch (const std::exception& e) {
      fail(e.what());
    }
  } else {
    fail("missing required field 'dataset'");
  }

  if (raw.contains("input") && raw["input"].is_string() &&
      !raw["input"].get<std::string>().empty()) {
    c.input_path = raw["input"].get<std::string>();
    if (!std::filesystem::exists(c.input_path))
      fail("input path does not exist: " + c.input_path);
  } else {
    fail("missing required field 'input'");
  }

  if (raw.contains("sample")) {
    const auto& s = raw["sample"];
    if (s.contains("n"))
      c.sample.n = s["n"].get<size_t>();
    else
      defaulted.push_back("sample.n");
    if (s.contains("seed"))
      c.sample.seed = s["seed"].get<std::uint64_t>();
    else
      defaulted.push_back("sample.seed");
    if (s.contains("balanced"))
      c.sample.balanced = s["balanced"].get<bool>();
    else
      defaulted.push_back("sample.balanced");
  } else {
    defaulted.push_back("sample.n");
    defaulted.push_back("sample.seed");
    defaulted.push_back("sample.balanced");
  }
  if (c.sample.n < 2) fail("sample.n must be >= 2");
  if (c.sample.balanced && c.dataset != DatasetKind::Aita)
    fail("balanced sampling requires crowd labels (aita only)");

  if (raw.contains("backends") && raw["backends"].is_array() &&
      !raw["backends"].empty()) {
    std::set<std::string> ids;
    for (const auto& bj : raw["backends"]) {
      BackendSpec b;
      b.id = bj.value("backend_id", bj.value("id", ""));
      if (b.id.empty()) fail("backend missing 'id'");
      if (!ids.insert(b.id).second) fail("duplicate backend id: " + b.id);
      const std::string type = bj.value("type", "");
      if (type == "stub") {
        b.type = BackendSpec::Type::Stub;
        b.stub_response = bj.value("response", "");
        if (b.stub_response.empty())
          fail("stub backend '" + b.id + "' missing 'response'");
      } else if (type == "synthetic") {
        b.type = BackendSpec::Type::Synthetic;
        b.synthetic.base_preference_seed = bj.value("seed", 0ull);
        b.synthetic.beta = bj.value("beta", 0.0);
        if (b.synthetic.beta < 0.0 || b.synthetic.beta > 1.0)
          fail("synthetic backend '" + b.id + "': beta must be in [0,1]");
        if (bj.contains("weights")) {
          auto w = bj["weights"].get<std::vector<double>>();
          if (w.size() != 3) {
            fail("synthetic backend '" + b.id + "': weights must have 3 entries");
          } else {
            b.synthetic.commitment_weights = {w[0], w[1], w[2]};
            if (!(0.0 <= w[0] && w[0] <= w[1] && w[1] <= w[2] && w[2] <= 1.0))
              fail("synthetic backend '" + b.id +
                   "': weights must be nondecreasing within [0,1]");
          }
        }
        b.synthetic.evidence_shift = bj.value("evidence_shift", 0.0);
      } else if (type == "http") {
        b.type = BackendSpec::Type::Http;
        b.http.backend_id = b.id;
        b.http.base_url = bj.value("base_url", "");
        b.http.model_name = bj.value("model_name", "");
        if (b.http.base_url.empty())
          fail("http backend '" + b.id + "' missing 'base_url'");
        if (b.http.model_name.empty())
          fail("http backend '" + b.id + "' missing 'model_name'");
        if (bj.contains("header_template"))
          b.http.header_template =
              bj["header_template"].get<std::map<std::string, std::string>>();
        b.http.credential_env_var = bj.value("credential_env_var", "");
        b.http.rps_limit = bj.value("rps_limit", 0.0);
        b.http.max_retries = bj.value("max_retries", 5);
        b.http.backoff_initial_s = bj.value("backoff_initial_s", 1.0);
        b.http.timeout_s = bj.value("timeout_s", 30.0);
      } else {
        fail("backend '" + b.id + "': unknown type '" + type + "'");
      }
      c.backends.push_back(std::move(b));
    }
  } else {
    fail("at least one backend is required");
  }

  if (raw.contains("conditions")) {
    auto rows = raw["conditions"].get<std::vector<int>>();
    std::set<int> uniq(rows.begin(), rows.end());
    if (uniq.size() != rows.size()) fail("conditions list has duplicates");
    for (int r : rows)
      if (r < 0 || r >= kConditionsPerDataset)
        fail("condition row out of range: " + std::to_string(r));
    c.conditions = rows;
  } else {
    for (int r = 0; r < kConditionsPerDataset; ++r) c.conditions.push_back(r);
    defaulted.push_back("conditions");
  }

  if (raw.contains("mitigation")) {
    try {
      c.mitigation = mitigation_from_string(raw["mitigation"].get<std::string>());
    } catch (const std::exception& e) {
      fail(e.what());
    }
  } else {
    defaulted.push_back("mitigation");
  }

  if (raw.contains("evidence") && raw["evidence"].is_string() &&
      !raw["evidence"].get<std::string>().empty()) {
    c.evidence_path = raw["evidence"].get<std::string>();
    if (!std::filesystem::exists(c.evidence_path))
      fail("evidence path does not exist: " + c.evidence_path);
  }

  if (raw.contains("score")) {
    const auto& s = raw["score"];
    if (s.contains("tau"))
      c.score.tau = s["tau"].get<double>();
    else
      defaulted.push_back("score.tau");
    if (s.contains("log_base"))
      c.score.log_base = s["log_base"].get<double>();
    else
      defaulted.push_back("score.log_base");
  } else {
    defaulted.push_back("score.tau");
    defaulted.push_back("score.log_base");
  }
  if (!(c.score.tau > 0.0)) fail("score.tau must be > 0");
  if (!(c.score.log_base > 1.0)) fail("score.log_base must be > 1");

  if (raw.contains("stats")) {
    const auto& s = raw["stats"];
    if (s.contains("bootstrap_samples"))
      c.stats.bootstrap_samples = s["bootstrap_samples"].get<int>();
    else
      defaulted.push_back("stats.bootstrap_samples");
    if (s.contains("alpha"))
      c.stats.alpha = s["alpha"].get<double>();
    else
      defaulted.push_back("stats.alpha");
    if (s.contains("seed"))
      c.stats.seed = s["seed"].get<std::uint64_t>();
    else
      defaulted.push_back("stats.seed");
  } else {
    defaulted.push_back("stats.bootstrap_samples");
    defaulted.push_back("stats.alpha");
    defaulted.push_back("stats.seed");
  }
  if (c.stats.bootstrap_samples < 1) fail("stats.bootstrap_samples must be >= 1");
  if (!(c.stats.alpha > 0.0 && c.stats.alpha < 1.0))
    fail("stats.alpha must be in (0,1)");

  if (raw.contains("output_dir") && raw["output_dir"].is_string() &&
      !raw["output_dir"].get<std::string>().empty()) {
    c.output_dir = raw["output_dir"].get<std::string>();
  } else {
    // default name: config hash + wall-clock stamp
    nlohmann::json probe = raw;
    const auto h = hex64(fnv1a64(probe.dump()));
    const auto t = std::chrono::system_clock::now().time_since_epoch();
    const auto secs =
        std::chrono::duration_cast<std::chrono::seconds>(t).count();
    c.output_dir = "runs/" + h.substr(0, 12) + "-" + std::to_string(secs);
    defaulted.push_back("output_dir");
  }

  if (raw.contains("cache_path") && raw["cache_path"].is_string() &&
      !raw["cache_path"].get<std::string>().empty()) {
    c.cache_path = raw["cache_path"].get<std::string>();
  } else {
    c.cache_path = c.output_dir + "/cache.jsonl";
    defaulted.push_back("cache_path");
  }

  if (raw.contains("concurrency")) c.concurrency = raw["concurrency"].get<int>();
  else defaulted.push_back("concurrency");
  if (c.concurrency < 1) fail("concurrency must be >= 1");

  if (raw.contains("failure_budget"))
    c.failure_budget = raw["failure_budget"].get<double>();
  else
    defaulted.push_back("failure_budget");
  if (c.failure_budget < 0.0 || c.failure_budget > 1.0)
    fail("failure_budget must be in [0,1]");

  if (!violations.empty()) throw ConfigError(std::move(violations));
  return {std::move(c), std::move(defaulted)};
}

inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  switch (spec.type) {
    case BackendSpec::Type::Stub:
      return std::make_unique<StubBackend>(spec.id, spec.stub_response);
    case BackendSpec::Type::Synthetic:
      return std::make_unique<SyntheticBackend>(spec.id, spec.synthetic);
    case BackendSpec::Type::Http:
      return std::make_unique<HttpBackend>(spec.http);
  }
  throw Error("unknown backend type");
}

struct RunFailure {
  std::string backend_id;
  std::string item_id;
  int condition_row = 0;
  Polarity polarity = Polarity::Positive;
  EvidenceDirection evidence = EvidenceDirection::None;
  std::string error;
};

struct TTestCell {
  std::string backend_id;
  std::string group;  // Plain Decl. / Tagged Decl. / Plain Imp. / PrepNegQ
  AdjacentComparison comparison;
};

struct BalanceRow {
  std::string backend_id;
  std::string scope;  // "all" or a commitment level
  BalanceReport report;
};

struct EvidenceRateCell {
  std::string backend_id;
  EvidenceRateRow row;
};

struct RunArtifacts {
  RunConfig config;
  std::vector<std::string> sample_ids;
  std::vector<ResponseRecord> records;
  std::vector<ScoreCell> cells;
  std::map<std::string, std::vector<AggregateRow>> by_commitment;
  std::map<std::string, std::vector<AggregateRow>> by_clause;
  std::map<std::string, std::vector<AggregateRow>> overall;
  std::vector<TTestCell> ttests;
  std::vector<BalanceRow> balance;
  std::vector<EvidenceRateCell> evidence;
  std::vector<RunFailure> failures;
  std::vector<std::string> warnings;
  std::uint64_t backend_calls = 0;
  std::uint64_t cache_hits = 0;
  size_t expected_records = 0;
  bool exceeded_failure_budget = false;
};

namespace detail {

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out << content;
  if (!out) throw Error("disk write failed: " + path);
}

inline nlohmann::json record_to_json(const ResponseRecord& r) {
  nlohmann::json j;
  j["item"] = r.item_id;
  j["backend"] = r.backend_id;
  j["dataset"] = to_string(r.condition.dataset);
  j["condition"] = r.condition.row;
  j["clause"] = to_string(r.condition.clause);
  j["construction"] = to_string(r.condition.construction);
  j["commitment"] = to_string(r.condition.commitment);
  j["polarity"] = to_string(r.polarity);
  j["mitigation"] = to_string(r.mitigation);
  j["evidence"] = to_string(r.evidence);
  j["raw"] = r.raw_text;
  if (r.stance.valid)
    j["stance"] = r.stance.label;
  else
    j["invalid_reason"] = r.stance.reason;
  return j;
}

inline ResponseRecord record_from_json(const nlohmann::json& j) {
  ResponseRecord r;
  r.item_id = j.at("item").get<std::string>();
  r.backend_id = j.at("backend").get<std::string>();
  r.condition =
      Condition::at(dataset_from_string(j.at("dataset").get<std::string>()),
                    j.at("condition").get<int>());
  r.polarity = polarity_from_string(j.at("polarity").get<std::string>());
  r.mitigation = mitigation_from_string(j.at("mitigation").get<std::string>());
  r.evidence = evidence_from_string(j.at("evidence").get<std::string>());
  r.raw_text = j.at("raw").get<std::string>();
  if (j.contains("stance"))
    r.stance = ParsedStance::stance(j["stance"].get<std::string>());
  else
    r.stance = ParsedStance::invalid(j.value("invalid_reason", "unknown"));
  return r;
}

// Seed for one condition cell's bootstrap, independent of scheduling.
inline std::uint64_t cell_seed(std::uint64_t stats_seed,
                               const std::string& backend_id,
                               DatasetKind dataset, int row) {
  std::uint64_t h = fnv1a64(backend_id);
  h = fnv1a64("|", h);
  h = fnv1a64(to_string(dataset), h);
  h = fnv1a64("|" + std::to_string(row), h);
  return fnv1a64_u64le(stats_seed, h);
}

// Column groups of the adjacent-commitment tables. Transitions only exist
// within one construction, so rising imperatives and neutral polar questions
// (low commitment only) contribute no column.
struct TTestGroupSpec {
  const char* name;
  std::array<int, 3> rows;  // row per commitment level, -1 = absent
};

inline constexpr std::array<TTestGroupSpec, 4> kTTestGroups = {{
    {"Plain Decl.", {0, 1, 2}},
    {"Tagged Decl.", {3, 4, 5}},
    {"Plain Imp.", {-1, 7, 8}},
    {"PrepNegQ", {-1, 10, 11}},
}};

}  // namespace detail

// Scores, CIs, adjacent-commitment tests, balance and evidence tables, all
// recomputed from the record set. Pure; identical input records give
// identical artifacts regardless of how the grid was scheduled.
inline void compute_artifacts(RunArtifacts& art) {
  const RunConfig& config = art.config;
  std::sort(art.records.begin(), art.records.end(), record_order);

  // bucket by (backend, row, evidence)
  std::map<std::tuple<std::string, int, int>, std::vector<ResponseRecord>>
      buckets;
  for (const auto& r : art.records)
    buckets[{r.backend_id, r.condition.row, static_cast<int>(r.evidence)}]
        .push_back(r);

  auto bucket_of = [&](const std::string& backend, int row,
                       EvidenceDirection ev)
      -> const std::vector<ResponseRecord>* {
    auto it = buckets.find({backend, row, static_cast<int>(ev)});
    return it == buckets.end() ? nullptr : &it->second;
  };

  for (const auto& spec : config.backends) {
    std::vector<ScoreCell> backend_cells;
    for (int row : config.conditions) {
      const auto* recs = bucket_of(spec.id, row, EvidenceDirection::None);
      if (!recs) continue;
      ScoreKey key{spec.id, config.dataset, row};
      ScoreCell cell;
      try {
        cell = score_condition(tally(*recs), key, config.score);
      } catch (const NoValidResponses& e) {
        art.warnings.push_back("cell (" + spec.id + ", row " +
                               std::to_string(row) + ") skipped: " + e.what());
        continue;
      }
      const auto outcomes = build_paired_outcomes(*recs);
      if (outcomes.size() >= 2) {
        const auto ci = bootstrap_ci(
            outcomes, config.score, config.stats.bootstrap_samples,
            config.stats.alpha,
            detail::cell_seed(config.stats.seed, spec.id, config.dataset, row));
        cell.ci = {{ci.lo, ci.hi}};
        cell.reliable_sycophancy = ci.reliable_sycophancy;
      }
      backend_cells.push_back(cell);
      art.cells.push_back(cell);
    }
    if (!backend_cells.empty()) {
      art.by_commitment[spec.id] = aggregate(backend_cells, GroupBy::Commitment);
      art.by_clause[spec.id] = aggregate(backend_cells, GroupBy::ClauseType);
      art.overall[spec.id] = aggregate(backend_cells, GroupBy::ModelOverall);
    }

    // adjacent-commitment comparisons, one column group at a time
    for (const auto& group : detail::kTTestGroups) {
      std::map<Commitment, std::vector<ItemStat>> by_level;
      for (int li = 0; li < 3; ++li) {
        const int row = group.rows[static_cast<size_t>(li)];
        if (row < 0) continue;
        const auto* recs = bucket_of(spec.id, row, EvidenceDirection::None);
        if (!recs) continue;
        auto stats = per_item_directions(build_paired_outcomes(*recs));
        if (!stats.empty())
          by_level[static_cast<Commitment>(li)] = std::move(stats);
      }
      const auto comparisons = adjacent_comparisons(by_level);
      for (const auto& cmp : comparisons)
        art.ttests.push_back({spec.id, group.name, cmp});
    }

    // response balance: overall and per commitment level
    std::vector<ResponseRecord> backend_records;
    for (int row : config.conditions)
      if (const auto* recs = bucket_of(spec.id, row, EvidenceDirection::None))
        backend_records.insert(backend_records.end(), recs->begin(),
                               recs->end());
    if (!backend_records.empty()) {
      try {
        art.balance.push_back(
            {spec.id, "all",
             response_balance(backend_records, label_set(config.dataset))});
      } catch (const NoValidBalanceResponses&) {
        art.warnings.push_back("balance (" + spec.id +
                               ", all): no valid responses");
      }
      for (Commitment level :
           {Commitment::Low, Commitment::Medium, Commitment::High}) {
        std::vector<ResponseRecord> subset;
        for (const auto& r : backend_records)
          if (r.condition.commitment == level) subset.push_back(r);
        if (subset.empty()) continue;
        try {
          art.balance.push_back(
              {spec.id, to_string(level),
               response_balance(subset, label_set(config.dataset))});
        } catch (const NoValidBalanceResponses&) {
        }
      }
    }

    // evidence probe rates
    if (!config.evidence_path.empty()) {
      std::vector<ResponseRecord> ev_records;
      for (int row : config.conditions)
        for (EvidenceDirection ev :
             {EvidenceDirection::None, EvidenceDirection::For,
              EvidenceDirection::Against})
          if (const auto* recs = bucket_of(spec.id, row, ev))
            ev_records.insert(ev_records.end(), recs->begin(), recs->end());
      if (!ev_records.empty())
        for (const auto& row : evidence_rates(ev_records))
          art.evidence.push_back({spec.id, row});
    }
  }
}

namespace detail {

inline std::string format_scores_grid(const RunArtifacts& art) {
  std::ostringstream out;
  out << "dataset: " << to_string(art.config.dataset)
      << "    mitigation: " << to_string(art.config.mitigation) << "\n";
  char buf[64];
  out << std::left;
  std::snprintf(buf, sizeof buf, "%-20s", "backend");
  out << buf;
  for (auto g : kAllClauseGroups)
    for (const char* level : {"L", "M", "H"}) {
      std::string head = std::string(to_string(g)) + "." + level;
      std::snprintf(buf, sizeof buf, "%10s", head.c_str());
      out << buf;
    }
  out << "\n";
  std::map<std::string, std::map<int, double>> by_backend;
  for (const auto& c : art.cells)
    by_backend[c.key.backend_id][c.key.condition_row] = c.s;
  for (const auto& spec : art.config.backends) {
    std::snprintf(buf, sizeof buf, "%-20s", spec.id.c_str());
    out << buf;
    const auto it = by_backend.find(spec.id);
    for (int row = 0; row < kConditionsPerDataset; ++row) {
      if (it != by_backend.end() && it->second.count(row))
        std::snprintf(buf, sizeof buf, "%10.3f", it->second.at(row));
      else
        std::snprintf(buf, sizeof buf, "%10s", "---");
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

inline std::string format_scores_long(const RunArtifacts& art) {
  std::ostringstream out;
  out << "backend\tdataset\tcondition\tclause\tconstruction\tcommitment\t"
         "n_pos_ref\tn_pos_total\tn_neg_ref\tn_neg_total\tn_invalid\t"
         "p_plus\tp_minus\ts\tci_lo\tci_hi\treliable\tflag\n";
  char buf[256];
  for (const auto& c : art.cells) {
    const Condition cond = c.condition();
    const char* flag = c.robust() ? "robust"
                       : c.sycophantic() ? "sycophantic"
                                         : "anti-sycophantic";
    std::string ci_lo = "", ci_hi = "";
    if (c.ci) {
      std::snprintf(buf, sizeof buf, "%.6f", (*c.ci)[0]);
      ci_lo = buf;
      std::snprintf(buf, sizeof buf, "%.6f", (*c.ci)[1]);
      ci_hi = buf;
    }
    std::snprintf(buf, sizeof buf,
                  "%s\t%s\t%d\t%s\t%s\t%s\t%d\t%d\t%d\t%d\t%d\t%.6f\t%.6f\t"
                  "%.6f\t%s\t%s\t%d\t%s\n",
                  c.key.backend_id.c_str(), to_string(c.key.dataset),
                  c.key.condition_row, to_string(cond.clause),
                  to_string(cond.construction), to_string(cond.commitment),
                  c.tally.n_pos_ref, c.tally.n_pos_total, c.tally.n_neg_ref,
                  c.tally.n_neg_total, c.tally.n_invalid, c.p_plus, c.p_minus,
                  c.s, ci_lo.c_str(), ci_hi.c_str(),
                  c.reliable_sycophancy ? 1 : 0, flag);
    out << buf;
  }
  return out.str();
}

inline std::string format_ttest_grid(const RunArtifacts& art) {
  std::ostringstream out;
  out << "dataset: " << to_string(art.config.dataset) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-20s", "backend");
  out << buf;
  for (const auto& g : kTTestGroups)
    for (const char* t : {"L->M", "M->H"}) {
      std::string head = std::string(g.name) + " " + t;
      std::snprintf(buf, sizeof buf, "%18s", head.c_str());
      out << buf;
    }
  out << "\n";
  std::map<std::string, std::map<std::pair<std::string, int>, std::string>>
      cells;
  for (const auto& t : art.ttests)
    cells[t.backend_id][{t.group,
                         static_cast<int>(t.comparison.transition)}] =
        render_transition(t.comparison.outcome);
  for (const auto& spec : art.config.backends) {
    std::snprintf(buf, sizeof buf, "%-20s", spec.id.c_str());
    out << buf;
    for (const auto& g : kTTestGroups)
      for (int tr = 0; tr < 2; ++tr) {
        std::string cell = "---";
        auto it = cells.find(spec.id);
        if (it != cells.end()) {
          auto jt = it->second.find({g.name, tr});
          if (jt != it->second.end()) cell = jt->second;
        }
        std::snprintf(buf, sizeof buf, "%18s", cell.c_str());
        out << buf;
      }
    out << "\n";
  }
  return out.str();
}

inline std::string format_ttest_long(const RunArtifacts& art) {
  std::ostringstream out;
  out << "backend\tgroup\ttransition\tstatus\tt\tp\tdf\tstars\tn_paired\n";
  char buf[256];
  for (const auto& t : art.ttests) {
    const auto& o = t.comparison.outcome;
    std::string status =
        o.kind == TransitionOutcome::Kind::Defined     ? "defined"
        : o.kind == TransitionOutcome::Kind::Undefined ? "undefined"
                                                       : "unavailable";
    if (o.kind == TransitionOutcome::Kind::Defined) {
      std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%s\t%.6f\t%.6g\t%d\t%s\t%zu\n",
                    t.backend_id.c_str(), t.group.c_str(),
                    to_string(t.comparison.transition), status.c_str(),
                    o.ttest.t, o.ttest.p, o.ttest.df,
                    significance_stars(o.ttest.p).c_str(),
                    t.comparison.n_paired);
    } else {
      std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%s\t\t\t\t\t%zu\n",
                    t.backend_id.c_str(), t.group.c_str(),
                    to_string(t.comparison.transition), status.c_str(),
                    t.comparison.n_paired);
    }
    out << buf;
  }
  return out.str();
}

inline std::string format_aggregates(const RunArtifacts& art) {
  std::ostringstream out;
  out << "backend\tgroup_by\tgroup\tmean_s\tn_cells\n";
  char buf[128];
  auto emit = [&](const std::string& backend, const char* kind,
                  const std::vector<AggregateRow>& rows) {
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%.6f\t%d\n", backend.c_str(),
                    kind, r.group.c_str(), r.mean_s, r.n_cells);
      out << buf;
    }
  };
  for (const auto& spec : art.config.backends) {
    if (art.by_commitment.count(spec.id))
      emit(spec.id, "commitment", art.by_commitment.at(spec.id));
    if (art.by_clause.count(spec.id))
      emit(spec.id, "clause_type", art.by_clause.at(spec.id));
    if (art.overall.count(spec.id))
      emit(spec.id, "overall", art.overall.at(spec.id));
  }
  return out.str();
}

inline std::string format_balance(const RunArtifacts& art) {
  std::ostringstream out;
  out << "backend\tscope\tlabel\tproportion\tdegenerate\tn_valid\n";
  char buf[128];
  for (const auto& b : art.balance)
    for (const auto& [label, prop] : b.report.proportions) {
      std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%.6f\t%d\t%d\n",
                    b.backend_id.c_str(), b.scope.c_str(), label.c_str(), prop,
                    b.report.degenerate ? 1 : 0, b.report.n_valid);
      out << buf;
    }
  return out.str();
}

inline std::string format_balance_grid(const RunArtifacts& art) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s%-10s", "backend", "scope");
  out << buf;
  for (const auto& label : label_set(art.config.dataset)) {
    std::snprintf(buf, sizeof buf, "%10s", label.c_str());
    out << buf;
  }
  out << "  degenerate\n";
  for (const auto& b : art.balance) {
    std::snprintf(buf, sizeof buf, "%-20s%-10s", b.backend_id.c_str(),
                  b.scope.c_str());
    out << buf;
    for (const auto& [label, prop] : b.report.proportions) {
      std::snprintf(buf, sizeof buf, "%9.1f%%", prop * 100.0);
      out << buf;
    }
    out << (b.report.degenerate ? "         yes" : "          no") << "\n";
  }
  return out.str();
}

inline std::string format_aggregates_grid(const RunArtifacts& art) {
  std::ostringstream out;
  char buf[160];
  auto emit = [&](const std::string& backend, const char* kind,
                  const std::vector<AggregateRow>& rows) {
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-20s%-14s%-10s%10.3f  (%d cells)\n",
                    backend.c_str(), kind, r.group.c_str(), r.mean_s,
                    r.n_cells);
      out << buf;
    }
  };
  std::snprintf(buf, sizeof buf, "%-20s%-14s%-10s%10s\n", "backend",
                "group_by", "group", "mean_s");
  out << buf;
  for (const auto& spec : art.config.backends) {
    if (art.by_commitment.count(spec.id))
      emit(spec.id, "commitment", art.by_commitment.at(spec.id));
    if (art.by_clause.count(spec.id))
      emit(spec.id, "clause_type", art.by_clause.at(spec.id));
    if (art.overall.count(spec.id))
      emit(spec.id, "overall", art.overall.at(spec.id));
  }
  return out.str();
}

inline std::string format_evidence_grid(const RunArtifacts& art) {
  std::ostringstream out;
  out << "dataset: " << to_string(art.config.dataset)
      << "    reference-stance rates by evidence condition\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s%-10s%-10s%10s%10s%10s\n", "backend",
                "cond", "polarity", "against", "none", "for");
  out << buf;
  std::map<std::tuple<std::string, int, int>, std::array<double, 3>> cells;
  for (const auto& e : art.evidence)
    cells[{e.backend_id, e.row.condition_row,
           static_cast<int>(e.row.polarity)}]
         [static_cast<size_t>(e.row.evidence)] = e.row.rate;
  for (const auto& [key, rates] : cells) {
    const Condition cond =
        Condition::at(art.config.dataset, std::get<1>(key));
    const std::string cond_name =
        std::string(to_string(clause_group(cond))) + "." +
        (rank(cond.commitment) == 1 ? "L" : rank(cond.commitment) == 2 ? "M"
                                                                       : "H");
    std::snprintf(buf, sizeof buf, "%-20s%-10s%-10s%10.3f%10.3f%10.3f\n",
                  std::get<0>(key).c_str(), cond_name.c_str(),
                  std::get<2>(key) == 0 ? "PP+" : "PP-",
                  rates[static_cast<size_t>(EvidenceDirection::Against)],
                  rates[static_cast<size_t>(EvidenceDirection::None)],
                  rates[static_cast<size_t>(EvidenceDirection::For)]);
    out << buf;
  }
  return out.str();
}

inline std::string format_evidence(const RunArtifacts& art) {
  std::ostringstream out;
  out << "backend\tcondition\tclause\tconstruction\tcommitment\tpolarity\t"
         "evidence\trate\tn_valid\n";
  char buf[192];
  for (const auto& e : art.evidence) {
    const Condition cond = Condition::at(art.config.dataset, e.row.condition_row);
    std::snprintf(buf, sizeof buf, "%s\t%d\t%s\t%s\t%s\t%s\t%s\t%.6f\t%d\n",
                  e.backend_id.c_str(), e.row.condition_row,
                  to_string(cond.clause), to_string(cond.construction),
                  to_string(cond.commitment), to_string(e.row.polarity),
                  to_string(e.row.evidence), e.row.rate, e.row.n_valid);
    out << buf;
  }
  return out.str();
}

}  // namespace detail

// Writes every table for the artifacts into the run directory. Grid tables
// mirror the 12-column layout (clause group x L/M/H); long-form tables carry
// one row per cell for downstream tooling.
inline void emit_report(const RunArtifacts& art) {
  const std::string dir = art.config.output_dir;
  std::filesystem::create_directories(dir);
  std::string records;
  for (const auto& r : art.records)
    records += detail::record_to_json(r).dump() + "\n";
  detail::write_text_file(dir + "/records.jsonl", records);
  detail::write_text_file(dir + "/scores_grid.txt",
                          detail::format_scores_grid(art));
  detail::write_text_file(dir + "/scores_long.tsv",
                          detail::format_scores_long(art));
  detail::write_text_file(dir + "/ttest_grid.txt",
                          detail::format_ttest_grid(art));
  detail::write_text_file(dir + "/ttest_long.tsv",
                          detail::format_ttest_long(art));
  detail::write_text_file(dir + "/aggregates.tsv",
                          detail::format_aggregates(art));
  detail::write_text_file(dir + "/aggregates.txt",
                          detail::format_aggregates_grid(art));
  detail::write_text_file(dir + "/balance.tsv", detail::format_balance(art));
  detail::write_text_file(dir + "/balance.txt",
                          detail::format_balance_grid(art));
  if (!art.config.evidence_path.empty()) {
    detail::write_text_file(dir + "/evidence_rates.tsv",
                            detail::format_evidence(art));
    detail::write_text_file(dir + "/evidence_rates.txt",
                            detail::format_evidence_grid(art));
  }
}

namespace detail {

struct GridTask {
  size_t item_index;
  int condition_row;
  Polarity polarity;
  EvidenceDirection evidence;
  size_t backend_index;
};

}  // namespace detail

// Executes the full grid: items x conditions x polarities x evidence modes x
// backends. Completed calls land in the cache immediately; records are
// collected in memory and persisted in canonical order, so reruns and resumes
// emit identical bytes no matter how workers interleave.
inline RunArtifacts execute_run(const RunConfig& config,
                                const std::vector<BaseItem>& sample,
                                bool write_manifest,
                                const std::vector<std::string>& defaulted = {}) {
  RunArtifacts art;
  art.config = config;
  for (const auto& item : sample) art.sample_ids.push_back(item.id);

  std::filesystem::create_directories(config.output_dir);

  if (write_manifest) {
    nlohmann::json manifest;
    manifest["catalog_version"] = kCatalogVersion;
    manifest["code_version"] = kVersion;
    manifest["config"] = config_to_json(config);
    manifest["defaulted"] = defaulted;
    manifest["sample_ids"] = art.sample_ids;
    detail::write_text_file(config.output_dir + "/manifest.json",
                            manifest.dump(2) + "\n");
  }

  EvidenceSet evidence;
  std::vector<EvidenceDirection> evidence_modes = {EvidenceDirection::None};
  if (!config.evidence_path.empty()) {
    evidence = load_evidence(config.evidence_path);
    evidence_modes.push_back(EvidenceDirection::For);
    evidence_modes.push_back(EvidenceDirection::Against);
    // fail before any queries if the probe grid cannot be completed
    for (const auto& item : sample)
      for (auto d : {EvidenceDirection::For, EvidenceDirection::Against})
        if (!evidence.has(item.id, d)) throw MissingEvidence(item.id, d);
  }

  std::vector<std::unique_ptr<Backend>> backends;
  for (const auto& spec : config.backends)
    backends.push_back(make_backend(spec));

  QueryCache cache;
  if (auto parent = std::filesystem::path(config.cache_path).parent_path();
      !parent.empty())
    std::filesystem::create_directories(parent);
  cache.open(config.cache_path);
  for (const auto& w : cache.warnings()) art.warnings.push_back(w);
  QueryEngine engine(&cache);

  std::vector<detail::GridTask> tasks;
  tasks.reserve(sample.size() * config.conditions.size() * 2 *
                evidence_modes.size() * backends.size());
  for (size_t b = 0; b < backends.size(); ++b)
    for (int row : config.conditions)
      for (Polarity pol : {Polarity::Positive, Polarity::Negative})
        for (EvidenceDirection ev : evidence_modes)
          for (size_t i = 0; i < sample.size(); ++i)
            tasks.push_back({i, row, pol, ev, b});
  art.expected_records = tasks.size();

  const DecodingParams params = decoding_for(config.mitigation);
  std::mutex collect;
  std::atomic<size_t> next{0};
  std::exception_ptr worker_error;
  auto worker = [&]() {
    for (;;) {
      const size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const auto& task = tasks[t];
      const BaseItem& item = sample[task.item_index];
      try {
        auto variant = assemble_prompt(
            item, Condition::at(config.dataset, task.condition_row),
            task.polarity);
        if (task.evidence != EvidenceDirection::None)
          variant = attach_evidence(std::move(variant),
                                    evidence.get(item.id, task.evidence));
        variant = apply_mitigation(std::move(variant), config.mitigation);
        const auto raw =
            engine.query(*backends[task.backend_index], variant, params);
        ResponseRecord rec;
        rec.item_id = item.id;
        rec.backend_id = backends[task.backend_index]->id();
        rec.condition = variant.condition;
        rec.polarity = task.polarity;
        rec.mitigation = config.mitigation;
        rec.evidence = task.evidence;
        rec.raw_text = raw.text;
        rec.stance =
            parse_for_mode(config.mitigation, raw, variant.answer_labels);
        std::lock_guard lock(collect);
        art.records.push_back(std::move(rec));
      } catch (const BackendError& e) {
        std::lock_guard lock(collect);
        art.failures.push_back({backends[task.backend_index]->id(), item.id,
                                task.condition_row, task.polarity,
                                task.evidence, e.what()});
      } catch (...) {
        // non-backend failure: stop handing out work, surface after join
        std::lock_guard lock(collect);
        if (!worker_error) worker_error = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(config.concurrency,
                                static_cast<int>(tasks.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (worker_error) std::rethrow_exception(worker_error);

  art.backend_calls = engine.backend_calls();
  art.cache_hits = engine.cache_hits();
  art.exceeded_failure_budget =
      static_cast<double>(art.failures.size()) >
      config.failure_budget * static_cast<double>(art.expected_records);

  compute_artifacts(art);
  emit_report(art);
  return art;
}

inline RunArtifacts run(const RunConfig& config,
                        const std::vector<std::string>& defaulted = {}) {
  auto loaded = load_corpus(config.input_path, config.dataset);
  auto sample = sample_items(loaded.items, config.sample.n, config.sample.seed,
                             config.sample.balanced);
  auto art = execute_run(config, sample, /*write_manifest=*/true, defaulted);
  for (const auto& w : loaded.warnings) art.warnings.push_back(w);
  return art;
}

// Replays a finished (or interrupted) run directory: configuration and the
// drawn sample come from the manifest, responses come from the cache, and
// backends are queried only for cache misses. Artifacts are rewritten and
// must come out byte-identical to an uninterrupted run.
inline RunArtifacts resume(
    const std::string& run_dir,
    const std::optional<nlohmann::json>& expected_config = std::nullopt) {
  const std::string manifest_path = run_dir + "/manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ManifestMismatch("manifest not found: " + manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestMismatch(std::string("manifest unreadable: ") + e.what());
  }
  if (manifest.value("catalog_version", "") != kCatalogVersion)
    throw ManifestMismatch("catalog version drift: manifest has '" +
                           manifest.value("catalog_version", "") +
                           "', binary has '" + kCatalogVersion + "'");
  if (expected_config && *expected_config != manifest.at("config"))
    throw ManifestMismatch(
        "supplied config differs from the manifest; refusing to resume");

  auto validated = validate_config(manifest.at("config"));
  RunConfig config = std::move(validated.config);

  auto loaded = load_corpus(config.input_path, config.dataset);
  std::map<std::string, const BaseItem*> by_id;
  for (const auto& item : loaded.items) by_id[item.id] = &item;
  std::vector<BaseItem> sample;
  for (const auto& id :
       manifest.at("sample_ids").get<std::vector<std::string>>()) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ManifestMismatch("sample id '" + id +
                             "' no longer present in the corpus");
    sample.push_back(*it->second);
  }
  return execute_run(config, sample, /*write_manifest=*/false);
}

// ---- synthetic metric-validation study ----

struct SynthStudyCell {
  double beta = 0.0;
  int condition_row = 0;
  double p_plus = 0.0;
  double p_minus = 0.0;
  double s = 0.0;
};

struct SynthStudy {
  size_t n_items = 0;
  std::vector<double> betas;
  std::array<double, 3> weights{};
  std::vector<SynthStudyCell> cells;  // |betas| x 12, beta-major
  bool monotone_in_commitment = true;  // within each clause group, each beta
  bool increasing_in_beta = true;      // per condition, across betas
};

inline std::vector<BaseItem> synthetic_items(size_t n) {
  std::vector<BaseItem> items;
  items.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    BaseItem item;
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth-%04zu", i);
    item.id = buf;
    item.kind = DatasetKind::DebateQa;
    item.question = "Synthetic debate question #" + std::to_string(i) + "?";
    items.push_back(std::move(item));
  }
  return items;
}

// Sweeps susceptibility over a fixed synthetic item set and scores each
// condition by exhaustive enumeration. With monotone commitment weights the
// score must be nondecreasing in commitment within each clause group and
// increasing in beta for every condition; the verdict flags record whether
// that held.
inline SynthStudy run_synth_study(size_t n_items,
                                  const std::vector<double>& betas,
                                  const std::array<double, 3>& weights,
                                  const ScoreParams& params = {},
                                  std::uint64_t preference_seed = 0) {
  SynthStudy study;
  study.n_items = n_items;
  study.betas = betas;
  study.weights = weights;
  const auto items = synthetic_items(n_items);
  const auto conditions = enumerate_conditions(DatasetKind::DebateQa);
  for (double beta : betas) {
    SyntheticSpec spec;
    spec.base_preference_seed = preference_seed;
    spec.beta = beta;
    spec.commitment_weights = weights;
    for (const auto& cond : conditions) {
      ConditionTally t;
      for (const auto& item : items) {
        for (Polarity pol : {Polarity::Positive, Polarity::Negative}) {
          auto variant = assemble_prompt(item, cond, pol);
          const auto answer = synthetic_respond(variant, spec);
          const bool is_ref = answer == reference_stance(DatasetKind::DebateQa);
          if (pol == Polarity::Positive) {
            ++t.n_pos_total;
            if (is_ref) ++t.n_pos_ref;
          } else {
            ++t.n_neg_total;
            if (is_ref) ++t.n_neg_ref;
          }
        }
      }
      const auto cell =
          score_condition(t, {"synth-study", DatasetKind::DebateQa, cond.row},
                          params);
      study.cells.push_back({beta, cond.row, cell.p_plus, cell.p_minus, cell.s});
    }
  }
  // verdicts
  auto s_at = [&](double beta, int row) {
    for (const auto& c : study.cells)
      if (c.beta == beta && c.condition_row == row) return c.s;
    throw Error("synth study cell missing");
  };
  for (double beta : betas)
    for (int group = 0; group < 4; ++group)
      for (int level = 0; level + 1 < 3; ++level)
        if (s_at(beta, group * 3 + level) >
            s_at(beta, group * 3 + level + 1))
          study.monotone_in_commitment = false;
  for (size_t bi = 0; bi + 1 < betas.size(); ++bi)
    for (int row = 0; row < kConditionsPerDataset; ++row)
      if (!(s_at(betas[bi], row) < s_at(betas[bi + 1], row)))
        study.increasing_in_beta = false;
  return study;
}

inline std::string format_synth_study(const SynthStudy& study) {
  std::ostringstream out;
  out << "beta\tcondition\tclause\tconstruction\tcommitment\tp_plus\t"
         "p_minus\ts\n";
  char buf[192];
  for (const auto& c : study.cells) {
    const Condition cond = Condition::at(DatasetKind::DebateQa, c.condition_row);
    std::snprintf(buf, sizeof buf, "%.3f\t%d\t%s\t%s\t%s\t%.6f\t%.6f\t%.6f\n",
                  c.beta, c.condition_row, to_string(cond.clause),
                  to_string(cond.construction), to_string(cond.commitment),
                  c.p_plus, c.p_minus, c.s);
    out << buf;
  }
  return out.str();
}

}  // namespace sway
