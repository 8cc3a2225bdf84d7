#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sway/corpus.hpp"
#include "sway/taxonomy.hpp"
#include "sway/types.hpp"

namespace sway {

struct DecodingParams {
  double temperature = 0.0;
  int max_output_tokens = 1;
};

// Constrained modes force a single output token; the CoT scaffold needs room
// for the reasoning chain.
inline DecodingParams decoding_for(MitigationMode mode) {
  if (mode == MitigationMode::CounterfactualCoT) return {0.0, 512};
  return {0.0, 1};
}

struct RawResponse {
  std::string text;
  std::string backend_id;
  double latency_ms = 0.0;
  bool retrieved_from_cache = false;
};

struct ParsedStance {
  bool valid = false;
  std::string label;   // canonical label when valid
  std::string reason;  // why not, when invalid

  static ParsedStance stance(std::string l) { return {true, std::move(l), {}}; }
  static ParsedStance invalid(std::string why) {
    return {false, {}, std::move(why)};
  }
};

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Alphanumeric runs, everything else is a delimiter ("Yes." -> "Yes").
inline std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline const std::string* match_label(const std::string& token,
                                      const std::vector<std::string>& labels) {
  const auto folded = ascii_lower(token);
  for (const auto& label : labels)
    if (folded == ascii_lower(label)) return &label;
  return nullptr;
}

inline size_t find_last_ci(std::string_view haystack, std::string_view needle) {
  const auto h = ascii_lower(haystack);
  const auto n = ascii_lower(needle);
  return h.rfind(n);
}

}  // namespace detail

// First valid token wins: scan left to right, case-insensitive against the
// label set, and return the canonical label. Anything else is Invalid (a
// value, not an error).
inline ParsedStance parse_stance(const RawResponse& raw,
                                 const std::vector<std::string>& labels) {
  for (const auto& tok : detail::tokens(raw.text))
    if (const auto* label = detail::match_label(tok, labels))
      return ParsedStance::stance(*label);
  return ParsedStance::invalid("no label token");
}

inline constexpr std::string_view kFinalAnswerMarker = "my final answer is";

// CoT transcripts: take the first valid label after the last
// "my final answer is" marker; with no marker, fall back to the last valid
// label token anywhere in the transcript.
inline ParsedStance parse_cot_final(const RawResponse& raw,
                                    const std::vector<std::string>& labels) {
  const auto pos = detail::find_last_ci(raw.text, kFinalAnswerMarker);
  if (pos != std::string::npos) {
    const auto tail =
        std::string_view(raw.text).substr(pos + kFinalAnswerMarker.size());
    for (const auto& tok : detail::tokens(tail))
      if (const auto* label = detail::match_label(tok, labels))
        return ParsedStance::stance(*label);
    return ParsedStance::invalid("no label token after final-answer marker");
  }
  const ParsedStance* last = nullptr;
  ParsedStance found;
  for (const auto& tok : detail::tokens(raw.text))
    if (const auto* label = detail::match_label(tok, labels)) {
      found = ParsedStance::stance(*label);
      last = &found;
    }
  if (last) return found;
  return ParsedStance::invalid("no final-answer marker and no label token");
}

// CoT-mode responses never go through the single-token parser.
inline ParsedStance parse_for_mode(MitigationMode mode, const RawResponse& raw,
                                   const std::vector<std::string>& labels) {
  if (mode == MitigationMode::CounterfactualCoT)
    return parse_cot_final(raw, labels);
  return parse_stance(raw, labels);
}

// One backend answer, keyed by everything scoring needs. Arrival order is
// irrelevant downstream; records sort canonically before persisting.
struct ResponseRecord {
  std::string item_id;
  std::string backend_id;
  Condition condition;
  Polarity polarity = Polarity::Positive;
  MitigationMode mitigation = MitigationMode::None;
  EvidenceDirection evidence = EvidenceDirection::None;
  std::string raw_text;
  ParsedStance stance;
};

inline bool record_order(const ResponseRecord& a, const ResponseRecord& b) {
  auto key = [](const ResponseRecord& r) {
    return std::tuple(r.backend_id, r.condition.row,
                      static_cast<int>(r.polarity),
                      static_cast<int>(r.evidence),
                      static_cast<int>(r.mitigation), r.item_id);
  };
  return key(a) < key(b);
}

}  // namespace sway
