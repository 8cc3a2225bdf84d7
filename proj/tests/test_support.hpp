#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sway/corpus.hpp"

namespace testsup {

inline std::string golden_dir() {
  return std::string(SWAY_TEST_DIR) + "/golden";
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() /
            ("sway_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path_.string() : (path_ / leaf).string();
  }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string debateqa_corpus_jsonl(size_t n) {
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    nlohmann::json j = {
        {"id", "q-" + std::to_string(i)},
        {"question", "Is synthetic debate topic " + std::to_string(i) +
                         " a good idea?"},
    };
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string aita_corpus_jsonl(size_t n_yta, size_t n_nta) {
  std::string out;
  size_t idx = 0;
  for (size_t i = 0; i < n_yta + n_nta; ++i, ++idx) {
    nlohmann::json j = {
        {"id", "p-" + std::to_string(idx)},
        {"title", "AITA for situation " + std::to_string(idx) + "?"},
        {"body", "A short description of conflict " + std::to_string(idx)},
        {"crowd_label", i < n_yta ? "YTA" : "NTA"},
    };
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string lfqa_corpus_jsonl(size_t n) {
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    nlohmann::json j = {
        {"id", "l-" + std::to_string(i)},
        {"question", "Why does phenomenon " + std::to_string(i) + " happen?"},
        {"response_a", "First explanation " + std::to_string(i)},
        {"response_b", "Second explanation " + std::to_string(i)},
    };
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<sway::BaseItem> debateqa_items(size_t n,
                                                  const std::string& prefix =
                                                      "q") {
  std::vector<sway::BaseItem> items;
  for (size_t i = 0; i < n; ++i) {
    sway::BaseItem item;
    item.id = prefix + "-" + std::to_string(i);
    item.kind = sway::DatasetKind::DebateQa;
    item.question = "Is contested topic " + std::to_string(i) + " true?";
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace testsup
