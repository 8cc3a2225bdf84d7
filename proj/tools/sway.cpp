// Command-line front end: run/resume/report/validate/synth-study.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sway/sway.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sway::Error("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw sway::Error("config file " + path + " is not valid JSON: " +
                      e.what());
  }
}

void print_summary(const sway::RunArtifacts& art) {
  std::printf("run complete: %zu records (%zu expected), %zu failures\n",
              art.records.size(), art.expected_records, art.failures.size());
  std::printf("backend calls: %llu, cache hits: %llu\n",
              static_cast<unsigned long long>(art.backend_calls),
              static_cast<unsigned long long>(art.cache_hits));
  for (const auto& w : art.warnings)
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& f : art.failures)
    std::fprintf(stderr, "failure: backend=%s item=%s row=%d: %s\n",
                 f.backend_id.c_str(), f.item_id.c_str(), f.condition_row,
                 f.error.c_str());
  std::printf("artifacts written to %s\n", art.config.output_dir.c_str());
  if (art.exceeded_failure_budget)
    std::fprintf(stderr, "failure budget exceeded (%.1f%% allowed)\n",
                 art.config.failure_budget * 100.0);
}

struct RunFlags {
  std::string config_path;
  std::string dataset;
  std::string input;
  std::string mitigation;
  std::string evidence;
  std::string out;
  std::optional<std::uint64_t> n;
  std::optional<std::uint64_t> seed;
  bool balanced = false;
};

// CLI flags override the config file field for field.
nlohmann::json merged_config(const RunFlags& flags) {
  nlohmann::json raw = nlohmann::json::object();
  if (!flags.config_path.empty()) raw = load_json_file(flags.config_path);
  if (!flags.dataset.empty()) raw["dataset"] = flags.dataset;
  if (!flags.input.empty()) raw["input"] = flags.input;
  if (!flags.mitigation.empty()) raw["mitigation"] = flags.mitigation;
  if (!flags.evidence.empty()) raw["evidence"] = flags.evidence;
  if (!flags.out.empty()) raw["output_dir"] = flags.out;
  if (flags.n) raw["sample"]["n"] = *flags.n;
  if (flags.seed) raw["sample"]["seed"] = *flags.seed;
  if (flags.balanced) raw["sample"]["balanced"] = true;
  return raw;
}

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--dataset", flags.dataset, "aita | lfqa | debateqa");
  cmd->add_option("--input", flags.input, "dataset JSONL path");
  cmd->add_option("--n", flags.n, "sample size");
  cmd->add_option("--seed", flags.seed, "sampling seed");
  cmd->add_flag("--balanced", flags.balanced,
                "balance crowd labels (aita only)");
  cmd->add_option("--mitigation", flags.mitigation, "none | baseline | cot");
  cmd->add_option("--evidence", flags.evidence, "evidence JSONL path");
  cmd->add_option("--out", flags.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sway: counterfactual sycophancy measurement for LLM backends"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* cmd_run = app.add_subcommand("run", "execute a full evaluation grid");
  add_run_flags(cmd_run, run_flags);

  std::string resume_dir;
  std::string resume_config;
  auto* cmd_resume =
      app.add_subcommand("resume", "replay a run directory from its cache");
  cmd_resume->add_option("--run", resume_dir, "run directory")->required();
  cmd_resume->add_option("--config", resume_config,
                         "config file to check against the manifest");

  std::string report_dir;
  auto* cmd_report = app.add_subcommand(
      "report", "recompute tables from a run directory's records");
  cmd_report->add_option("--run", report_dir, "run directory")->required();

  RunFlags validate_flags;
  auto* cmd_validate =
      app.add_subcommand("validate", "validate a config and show defaults");
  add_run_flags(cmd_validate, validate_flags);

  size_t study_items = 1000;
  std::vector<double> study_betas = {0.2, 0.4, 0.6, 0.8};
  std::vector<double> study_weights = {0.3, 0.6, 1.0};
  std::string study_out;
  auto* cmd_study = app.add_subcommand(
      "synth-study", "susceptibility sweep on the synthetic backend");
  cmd_study->add_option("--items", study_items, "synthetic item count");
  cmd_study->add_option("--betas", study_betas, "susceptibility values");
  cmd_study->add_option("--weights", study_weights,
                        "commitment weights (low medium high)");
  cmd_study->add_option("--out", study_out, "write the study table here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      auto validated = sway::validate_config(merged_config(run_flags));
      auto art = sway::run(validated.config, validated.defaulted);
      print_summary(art);
      return art.exceeded_failure_budget ? 1 : 0;
    }
    if (cmd_resume->parsed()) {
      std::optional<nlohmann::json> expected;
      if (!resume_config.empty())
        expected = sway::config_to_json(
            sway::validate_config(load_json_file(resume_config)).config);
      auto art = sway::resume(resume_dir, expected);
      print_summary(art);
      return art.exceeded_failure_budget ? 1 : 0;
    }
    if (cmd_report->parsed()) {
      sway::RunArtifacts art;
      const auto manifest = load_json_file(report_dir + "/manifest.json");
      art.config = sway::validate_config(manifest.at("config")).config;
      art.sample_ids =
          manifest.at("sample_ids").get<std::vector<std::string>>();
      std::ifstream in(report_dir + "/records.jsonl");
      if (!in) throw sway::Error("no records.jsonl in " + report_dir);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        art.records.push_back(
            sway::detail::record_from_json(nlohmann::json::parse(line)));
      }
      sway::compute_artifacts(art);
      sway::emit_report(art);
      std::printf("tables rewritten under %s\n",
                  art.config.output_dir.c_str());
      return 0;
    }
    if (cmd_validate->parsed()) {
      auto validated = sway::validate_config(merged_config(validate_flags));
      std::printf("%s\n", sway::config_to_json(validated.config).dump(2).c_str());
      if (!validated.defaulted.empty()) {
        std::printf("defaulted fields:\n");
        for (const auto& f : validated.defaulted)
          std::printf("  %s\n", f.c_str());
      }
      return 0;
    }
    if (cmd_study->parsed()) {
      if (study_weights.size() != 3)
        throw sway::Error("--weights needs exactly 3 values");
      auto study = sway::run_synth_study(
          study_items, study_betas,
          {study_weights[0], study_weights[1], study_weights[2]});
      const auto table = sway::format_synth_study(study);
      if (study_out.empty()) {
        std::fputs(table.c_str(), stdout);
      } else {
        sway::detail::write_text_file(study_out, table);
        std::printf("study table written to %s\n", study_out.c_str());
      }
      std::printf("monotone in commitment: %s\n",
                  study.monotone_in_commitment ? "yes" : "NO");
      std::printf("increasing in beta: %s\n",
                  study.increasing_in_beta ? "yes" : "NO");
      return (study.monotone_in_commitment && study.increasing_in_beta) ? 0 : 1;
    }
  } catch (const sway::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
