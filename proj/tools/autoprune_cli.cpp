// Command-line front end: run, report, select-source, library list|import|export.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "autoprune/autoprune.hpp"

namespace ap = autoprune;

namespace {

// Exit codes beyond CLI11's own.
constexpr int kExitError = 1;
constexpr int kExitLibrary = 3;
constexpr int kExitInfeasible = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<std::string> library;
};

void add_run_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--trials", f.trials, "number of trials");
  cmd->add_option("--mode", f.mode, "scratch | vanilla-transfer | augmented-transfer | assistant");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--library", f.library, "model library directory");
}

ap::ExperimentConfig load_config(const CommonFlags& f) {
  ap::json j = ap::read_json_file(f.config);
  if (f.seed) j["seed"] = *f.seed;
  if (f.trials) j["trials"] = *f.trials;
  if (f.mode) j["mode"] = *f.mode;
  if (f.out) j["output_dir"] = *f.out;
  if (f.library) j["library"] = *f.library;
  return ap::experiment_config_from_json(j);
}

void print_library(const ap::ModelLibrary& lib) {
  std::cout << "id,scenario_id,target_preservation,model_tag,dataset_tag,invariant_mode,created_at\n";
  for (const auto& m : lib.list()) {
    std::cout << m.id << ',' << m.scenario_id << ',' << ap::format_double(m.target_preservation) << ','
              << m.model_tag << ',' << m.dataset_tag << ',' << (m.invariant_mode ? 1 : 0) << ',' << m.created_at
              << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Auto-pruning policy search with transfer from historical runs"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "train a pruning agent and record it in the library");
  add_run_flags(run_cmd, run_flags);

  std::vector<std::string> report_csvs;
  std::optional<double> report_threshold;
  std::optional<std::string> report_out;
  auto* report_cmd = app.add_subcommand("report", "compare trial CSVs; the first is the baseline");
  report_cmd->add_option("csv", report_csvs, "trial CSV files")->check(CLI::ExistingFile);
  report_cmd->add_option("--threshold", report_threshold, "absolute accuracy threshold (default 98% of best)");
  report_cmd->add_option("--out", report_out, "write the table here instead of stdout");

  CommonFlags select_flags;
  auto* select_cmd = app.add_subcommand("select-source", "run source selection over library records");
  add_run_flags(select_cmd, select_flags);

  std::string lib_root = "library";
  auto* lib_cmd = app.add_subcommand("library", "inspect or move library records");
  lib_cmd->require_subcommand(1);
  lib_cmd->add_option("--library", lib_root, "model library directory");
  auto* list_cmd = lib_cmd->add_subcommand("list", "list records");
  list_cmd->add_option("--library", lib_root, "model library directory");
  std::string import_src;
  auto* import_cmd = lib_cmd->add_subcommand("import", "copy a record directory into the library");
  import_cmd->add_option("--library", lib_root, "model library directory");
  import_cmd->add_option("src", import_src, "record directory")->required()->check(CLI::ExistingDirectory);
  std::string export_id, export_dest;
  auto* export_cmd = lib_cmd->add_subcommand("export", "copy a record out of the library");
  export_cmd->add_option("--library", lib_root, "model library directory");
  export_cmd->add_option("id", export_id, "record id")->required();
  export_cmd->add_option("dest", export_dest, "destination directory (must not exist)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto config = load_config(run_flags);
      const auto summary = ap::run(config);
      std::cerr << "record " << summary.record_id << ": best accuracy "
                << ap::format_double(summary.result.curve.best()) << ", greedy policy accuracy "
                << ap::format_double(summary.policy.accuracy) << '\n';
      std::cout << summary.record_id << '\n';
    } else if (*report_cmd) {
      const auto table = ap::report(report_csvs, report_threshold);
      const std::string text = ap::report_csv(table);
      if (report_out) {
        ap::write_text_file(*report_out, text);
      } else {
        std::cout << text;
      }
    } else if (*select_cmd) {
      auto config = load_config(select_flags);
      const ap::ModelLibrary lib(config.library);
      const ap::Environment env = ap::environment_from_json(config.environment, config.scenario);
      auto candidates = ap::transfer_candidates(config, lib);
      if (candidates.empty()) throw ap::LibraryError("no compatible records in '" + config.library + "'");
      const auto sel = ap::run_source_selection(config, env, candidates);
      const std::string text = ap::selection_csv(sel);
      if (select_flags.out) {
        ap::fs::create_directories(*select_flags.out);
        ap::write_text_file((ap::fs::path(*select_flags.out) / "selection.csv").string(), text);
      } else {
        std::cout << text;
      }
      std::cerr << "selected " << sel.chosen_id << " (" << ap::to_string(sel.reason) << ")\n";
    } else if (*lib_cmd) {
      ap::ModelLibrary lib(lib_root);
      if (*list_cmd) {
        print_library(lib);
      } else if (*import_cmd) {
        std::cout << lib.import_record(import_src) << '\n';
      } else if (*export_cmd) {
        lib.export_record(export_id, export_dest);
      }
    }
  } catch (const ap::InfeasibleError& e) {
    std::cerr << "infeasible scenario: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ap::LibraryError& e) {
    std::cerr << "library error: " << e.what() << '\n';
    return kExitLibrary;
  } catch (const ap::TransferError& e) {
    std::cerr << "library error: " << e.what() << '\n';
    return kExitLibrary;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
