#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "sway/prng.hpp"
#include "sway/taxonomy.hpp"
#include "sway/types.hpp"

namespace sway {

struct MissingField : Error {
  MissingField(int record, const std::string& field)
      : Error("record " + std::to_string(record) + ": missing field '" +
              field + "'"),
        record(record),
        field(field) {}
  int record;
  std::string field;
};

struct MalformedRecord : Error {
  explicit MalformedRecord(int record, const std::string& why = "")
      : Error("record " + std::to_string(record) + ": malformed record" +
              (why.empty() ? "" : " (" + why + ")")),
        record(record) {}
  int record;
};

struct EmptyCorpus : Error {
  EmptyCorpus() : Error("corpus contains no records") {}
};

struct InsufficientItems : Error {
  InsufficientItems(size_t needed, size_t available)
      : Error("insufficient items: need " + std::to_string(needed) +
              ", have " + std::to_string(available)),
        needed(needed),
        available(available) {}
  size_t needed;
  size_t available;
};

struct DatasetMismatch : Error {
  DatasetMismatch(DatasetKind item, DatasetKind condition)
      : Error(std::string("dataset mismatch: item is ") + to_string(item) +
              ", condition is " + to_string(condition)) {}
};

// One loadable record. Fields are per kind: AITA uses title/body/crowd_label,
// LFQA uses question/response_a/response_b, DebateQA uses question.
// crowd_label feeds balanced sampling only; nothing downstream of prompt
// assembly ever sees it.
struct BaseItem {
  std::string id;
  DatasetKind kind = DatasetKind::DebateQa;
  std::string title;
  std::string body;
  std::string crowd_label;
  std::string question;
  std::string response_a;
  std::string response_b;
};

struct LoadResult {
  std::vector<BaseItem> items;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string require_field(const nlohmann::json& j, int record,
                                 const char* field) {
  if (!j.contains(field) || !j[field].is_string())
    throw MissingField(record, field);
  auto s = j[field].get<std::string>();
  if (s.empty()) throw MissingField(record, field);
  return s;
}

}  // namespace detail

// JSONL loader; one item per line. Duplicate ids keep the first occurrence
// and produce a warning rather than an error.
inline LoadResult load_corpus(const std::string& path, DatasetKind kind) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  LoadResult out;
  std::unordered_set<std::string> ids;
  std::string line;
  int record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++record;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw MalformedRecord(record);
    }
    if (!j.is_object()) throw MalformedRecord(record, "not an object");
    BaseItem item;
    item.kind = kind;
    item.id = detail::require_field(j, record, "id");
    switch (kind) {
      case DatasetKind::Aita:
        item.title = detail::require_field(j, record, "title");
        item.body = detail::require_field(j, record, "body");
        item.crowd_label = detail::require_field(j, record, "crowd_label");
        if (item.crowd_label != "YTA" && item.crowd_label != "NTA")
          throw MalformedRecord(record, "crowd_label must be YTA or NTA");
        break;
      case DatasetKind::Lfqa:
        item.question = detail::require_field(j, record, "question");
        item.response_a = detail::require_field(j, record, "response_a");
        item.response_b = detail::require_field(j, record, "response_b");
        break;
      case DatasetKind::DebateQa:
        item.question = detail::require_field(j, record, "question");
        break;
    }
    if (!ids.insert(item.id).second) {
      out.warnings.push_back("record " + std::to_string(record) +
                             ": duplicate id '" + item.id + "' ignored");
      continue;
    }
    out.items.push_back(std::move(item));
  }
  if (out.items.empty()) throw EmptyCorpus();
  return out;
}

namespace detail {

template <typename T>
inline void fisher_yates(std::vector<T>& v, Xoshiro256ss& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.bounded(i)]);
}

}  // namespace detail

// Deterministic sample of n items. Balanced mode (AITA) returns exactly
// floor(n/2) YTA + ceil(n/2) NTA, in shuffle order.
inline std::vector<BaseItem> sample_items(const std::vector<BaseItem>& items,
                                          size_t n, std::uint64_t seed,
                                          bool balanced) {
  std::vector<BaseItem> pool = items;
  Xoshiro256ss rng(seed);
  detail::fisher_yates(pool, rng);
  if (!balanced) {
    if (items.size() < n) throw InsufficientItems(n, items.size());
    pool.resize(n);
    return pool;
  }
  const size_t want_yta = n / 2;
  const size_t want_nta = n - want_yta;
  size_t have_yta = 0, have_nta = 0;
  for (const auto& it : items) (it.crowd_label == "YTA" ? have_yta : have_nta)++;
  if (have_yta < want_yta) throw InsufficientItems(want_yta, have_yta);
  if (have_nta < want_nta) throw InsufficientItems(want_nta, have_nta);
  std::vector<BaseItem> out;
  out.reserve(n);
  size_t got_yta = 0, got_nta = 0;
  for (auto& it : pool) {
    if (it.crowd_label == "YTA") {
      if (got_yta < want_yta) {
        ++got_yta;
        out.push_back(std::move(it));
      }
    } else if (got_nta < want_nta) {
      ++got_nta;
      out.push_back(std::move(it));
    }
    if (out.size() == n) break;
  }
  return out;
}

// A fully assembled prompt. The pieces are kept alongside full_text so that
// mitigation wrappers and the evidence probe can recompose without string
// surgery: full_text = scenario + pp_separator + presupposition + " " +
// instruction.
struct PromptVariant {
  std::string item_id;
  Condition condition;
  Polarity polarity = Polarity::Positive;
  std::string scenario;
  std::string pp_separator;
  std::string presupposition;
  std::string instruction;
  std::string full_text;
  std::vector<std::string> answer_labels;
  MitigationMode mitigation = MitigationMode::None;
  EvidenceDirection evidence = EvidenceDirection::None;
};

namespace detail {

inline std::string scenario_text(const BaseItem& item) {
  switch (item.kind) {
    case DatasetKind::Aita:
      return item.title + " " + item.body;
    case DatasetKind::Lfqa:
      return "Question: " + item.question + "\nResponse A: " +
             item.response_a + "\nResponse B: " + item.response_b;
    case DatasetKind::DebateQa:
      return item.question;
  }
  return {};
}

inline const char* pp_separator(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Aita: return ". ";
    case DatasetKind::Lfqa: return "\n";
    case DatasetKind::DebateQa: return " ";
  }
  return " ";
}

inline std::string compose(const PromptVariant& v) {
  return v.scenario + v.pp_separator + v.presupposition + " " + v.instruction;
}

}  // namespace detail

inline PromptVariant assemble_prompt(const BaseItem& item,
                                     const Condition& condition,
                                     Polarity polarity,
                                     const Catalog& catalog) {
  if (item.kind != condition.dataset)
    throw DatasetMismatch(item.kind, condition.dataset);
  PromptVariant v;
  v.item_id = item.id;
  v.condition = condition;
  v.polarity = polarity;
  v.scenario = detail::scenario_text(item);
  v.pp_separator = detail::pp_separator(item.kind);
  v.presupposition = render_presupposition(condition, polarity, catalog);
  v.instruction = answer_instruction(item.kind);
  v.full_text = detail::compose(v);
  v.answer_labels = label_set(item.kind);
  return v;
}

inline PromptVariant assemble_prompt(const BaseItem& item,
                                     const Condition& condition,
                                     Polarity polarity) {
  return assemble_prompt(item, condition, polarity,
                         builtin_catalog(condition.dataset));
}

}  // namespace sway
