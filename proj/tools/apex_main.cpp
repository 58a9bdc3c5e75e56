// Command-line front end: generate synthetic cohorts, extract features,
// run leave-one-subject-out evaluations, and compare attention weighting
// against the uniform baseline. All outputs are deterministic for a given
// seed and independent of --jobs. Errors land on stderr as one JSON object:
//   {"error":{"type":"...","message":"..."}}
// Exit codes: 0 success, 2 usage or configuration error, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apex/dataset.hpp"
#include "apex/ensemble.hpp"
#include "apex/errors.hpp"
#include "apex/eval.hpp"
#include "apex/features.hpp"
#include "apex/pipeline.hpp"
#include "apex/selection.hpp"
#include "apex/synth.hpp"

namespace fs = std::filesystem;

namespace {

int fail(const std::string& type, const std::string& message, int code) {
  nlohmann::json doc;
  doc["error"] = {{"type", type}, {"message", message}};
  std::cerr << doc.dump() << "\n";
  return code;
}

// Flags shared by every command that reads a dataset directory.
struct DataArgs {
  std::string data_dir;
  std::string exclude_file;
  std::optional<double> threshold_arousal;
  std::optional<double> threshold_valence;
};

void add_data_options(CLI::App* cmd, DataArgs& args, bool required) {
  auto* dir = cmd->add_option("--data-dir", args.data_dir,
                              "dataset directory (personality.csv, trials.csv, "
                              "subject_<id>/)")
                  ->envname("APEX_DATA_DIR");
  if (required) dir->required();
  cmd->add_option("--exclude", args.exclude_file,
                  "file listing subject ids to drop, one per line");
  cmd->add_option("--threshold-arousal", args.threshold_arousal,
                  "binarize arousal ratings at this value instead of the "
                  "median split");
  cmd->add_option("--threshold-valence", args.threshold_valence,
                  "binarize valence ratings at this value instead of the "
                  "median split");
}

apex::BinarizeSpec binarize_of(const DataArgs& args) {
  apex::BinarizeSpec spec;
  spec.arousal_threshold = args.threshold_arousal;
  spec.valence_threshold = args.threshold_valence;
  return spec;
}

std::vector<int> exclusions_of(const DataArgs& args) {
  if (args.exclude_file.empty()) return {};
  return apex::read_exclusion_list(args.exclude_file);
}

void add_extraction_options(CLI::App* cmd, apex::ExtractionConfig& config) {
  cmd->add_option("--window-seconds", config.window_s, "feature window length")
      ->capture_default_str();
  cmd->add_option("--shift-seconds", config.shift_s, "window shift")
      ->capture_default_str();
  cmd->add_option("--ecg-low-hz", config.ecg_bandpass.cutoff_low_hz,
                  "ECG band-pass lower edge")
      ->capture_default_str();
  cmd->add_option("--ecg-high-hz", config.ecg_bandpass.cutoff_high_hz,
                  "ECG band-pass upper edge")
      ->capture_default_str();
  cmd->add_option("--gsr-cutoff-hz", config.gsr_lowpass.cutoff_low_hz,
                  "GSR low-pass cutoff")
      ->capture_default_str();
}

struct ModelArgs {
  int k = 10;
  int max_depth = 5;
  int min_samples_leaf = 5;
};

void add_model_options(CLI::App* cmd, ModelArgs& args) {
  cmd->add_option("--k", args.k, "features kept by selection")
      ->capture_default_str();
  cmd->add_option("--max-depth", args.max_depth, "member tree depth limit")
      ->capture_default_str();
  cmd->add_option("--min-samples-leaf", args.min_samples_leaf,
                  "minimum training rows per leaf")
      ->capture_default_str();
}

apex::RunConfig run_config_of(const DataArgs& data, const ModelArgs& model,
                              std::uint64_t seed, unsigned jobs) {
  apex::RunConfig config;
  config.selection.k = model.k;
  config.tree.max_depth = model.max_depth;
  config.tree.min_samples_leaf = model.min_samples_leaf;
  config.exclude_subjects = exclusions_of(data);
  config.seed = seed;
  config.jobs = jobs;
  return config;
}

// ---------------------------------------------------------------- synth --

struct SynthArgs {
  std::string out;
  apex::SynthConfig config;
};

int cmd_synth(const SynthArgs& args) {
  const auto cohort = apex::generate_cohort(args.config);
  apex::write_dataset(args.out, cohort.subjects);
  apex::write_ground_truth(fs::path(args.out) / "ground_truth.json",
                           cohort.truth);
  std::size_t trials = 0;
  for (const auto& subject : cohort.subjects) trials += subject.trials.size();
  std::cout << "wrote " << cohort.subjects.size() << " subjects, " << trials
            << " trials to " << args.out << "\n";
  return 0;
}

// -------------------------------------------------------------- extract --

struct ExtractArgs {
  DataArgs data;
  std::string out;
  apex::ExtractionConfig extraction;
  unsigned jobs = 0;
};

int cmd_extract(const ExtractArgs& args) {
  const auto subjects = apex::ingest_dataset(args.data.data_dir,
                                             binarize_of(args.data));
  const auto excluded_ids = exclusions_of(args.data);
  const std::set<int> excluded(excluded_ids.begin(), excluded_ids.end());

  std::vector<apex::Trial> trials;
  for (const auto& subject : subjects) {
    if (excluded.count(subject.subject_id)) continue;
    trials.insert(trials.end(), subject.trials.begin(), subject.trials.end());
  }
  if (trials.empty()) {
    throw apex::InputError("no trials left after exclusions");
  }

  apex::ExtractionConfig extraction = args.extraction;
  extraction.jobs = static_cast<int>(args.jobs);
  const auto result = apex::extract_matrix(trials, extraction);

  fs::create_directories(args.out);
  apex::write_feature_csv(fs::path(args.out) / "features.csv", result.matrix);
  apex::write_skip_report(fs::path(args.out) / "skips.txt", result.skipped);
  std::cout << "extracted " << result.matrix.rows.size() << " windows ("
            << result.skipped.size() << " trials skipped) to " << args.out
            << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval --

struct EvalArgs {
  DataArgs data;
  std::string out;
  std::string task = "arousal";
  std::string weights = "attention";
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  ModelArgs model;
  apex::ExtractionConfig extraction;
  std::string save_model_dir;
};

int cmd_eval(const EvalArgs& args) {
  apex::RunConfig config =
      run_config_of(args.data, args.model, args.seed, args.jobs);
  config.task = apex::task_from_name(args.task);
  config.mode = apex::weight_mode_from_name(args.weights);
  config.extraction = args.extraction;

  const auto subjects = apex::ingest_dataset(args.data.data_dir,
                                             binarize_of(args.data));
  const auto built = apex::build_cohort(subjects, config);
  const auto report =
      apex::loso_evaluate(built.cohort, config.task, apex::eval_params_of(config));

  fs::create_directories(args.out);
  const fs::path out(args.out);
  apex::write_report_json(out / "report.json", report);
  apex::write_roc_csv(out / "roc.csv", report);
  apex::write_roc_svg(out / "roc.svg", report);
  apex::write_weights_table(out / "weights.csv", report);
  apex::write_skip_report(out / "skips.txt", built.skipped);

  if (!args.save_model_dir.empty()) {
    apex::FeatureMatrix pooled;
    std::vector<int> labels;
    for (const auto& dataset : built.cohort) {
      for (const auto& row : dataset.rows.rows) {
        pooled.rows.push_back(row);
        labels.push_back(apex::label_of(row, config.task));
      }
    }
    auto selection = config.selection;
    selection.tree_params = config.tree;
    selection.seed = config.seed;
    const auto mask = apex::select_features(pooled, labels, selection);
    const auto model =
        apex::fit_apex(built.cohort, config.tree, mask, config.task, config.seed);
    apex::save_model(args.save_model_dir, model);
    std::cout << "saved full-cohort model to " << args.save_model_dir << "\n";
  }

  std::printf("task %s, weights %s, %zu subjects\n", args.task.c_str(),
              args.weights.c_str(), report.folds.size());
  std::printf("mean window accuracy %.3f\n", report.mean_window_accuracy);
  std::printf("mean trial accuracy  %.3f\n", report.mean_trial_accuracy);
  std::printf("mean auc             %.3f (%zu folds excluded from roc)\n",
              report.mean_auc, report.roc_excluded_subjects.size());
  std::cout << "wrote report.json, roc.csv, roc.svg, weights.csv, skips.txt to "
            << args.out << "\n";
  return 0;
}

// -------------------------------------------------------------- compare --

struct CompareArgs {
  DataArgs data;
  std::string out;
  std::optional<double> coupling;
  int subjects = 12;
  int videos = 8;
  double trial_seconds = 30.0;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  ModelArgs model;
};

int cmd_compare(const CompareArgs& args) {
  const bool from_disk = !args.data.data_dir.empty();
  if (from_disk == args.coupling.has_value()) {
    throw apex::ConfigError(
        "compare needs exactly one input: --data-dir or --coupling");
  }

  std::vector<apex::RawSubject> subjects;
  if (from_disk) {
    subjects = apex::ingest_dataset(args.data.data_dir, binarize_of(args.data));
  } else {
    apex::SynthConfig synth;
    synth.n_subjects = args.subjects;
    synth.n_videos = args.videos;
    synth.trial_seconds = args.trial_seconds;
    synth.coupling = *args.coupling;
    synth.seed = args.seed;
    subjects = apex::generate_cohort(synth).subjects;
  }

  apex::RunConfig config =
      run_config_of(args.data, args.model, args.seed, args.jobs);
  const auto built = apex::build_cohort(subjects, config);

  nlohmann::json doc;
  doc["source"] = from_disk ? "dataset" : "synth";
  if (!from_disk) doc["coupling"] = *args.coupling;
  doc["seed"] = args.seed;
  doc["rows"] = nlohmann::json::array();

  std::printf("%-8s  %-9s  %10s  %10s  %8s\n", "task", "weights", "window_acc",
              "trial_acc", "auc");
  for (const auto task : {apex::Task::arousal, apex::Task::valence}) {
    for (const auto mode :
         {apex::WeightMode::attention, apex::WeightMode::uniform}) {
      config.mode = mode;
      const auto report =
          apex::loso_evaluate(built.cohort, task, apex::eval_params_of(config));
      std::printf("%-8s  %-9s  %10.3f  %10.3f  %8.3f\n",
                  apex::task_name(task).c_str(),
                  apex::weight_mode_name(mode).c_str(),
                  report.mean_window_accuracy, report.mean_trial_accuracy,
                  report.mean_auc);
      doc["rows"].push_back(
          {{"task", apex::task_name(task)},
           {"mode", apex::weight_mode_name(mode)},
           {"mean_window_accuracy", report.mean_window_accuracy},
           {"mean_trial_accuracy", report.mean_trial_accuracy},
           {"mean_auc", report.mean_auc}});
    }
  }

  if (!args.out.empty()) {
    fs::create_directories(args.out);
    const fs::path path = fs::path(args.out) / "compare.json";
    std::ofstream file(path);
    if (!file) throw apex::IngestError("cannot write " + path.string());
    file << doc.dump(2) << "\n";
    std::cout << "wrote " << path.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "attention-weighted per-subject ensembles over physiological "
      "recordings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "apex 1.0.0");
  app.footer(
      "Environment overrides: APEX_DATA_DIR, APEX_OUT, APEX_SEED, APEX_JOBS.\n"
      "Explicit flags win over environment values.");

  SynthArgs synth;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth_cmd->add_option("--out", synth.out, "output dataset directory")
      ->envname("APEX_OUT")
      ->required();
  synth_cmd->add_option("--subjects", synth.config.n_subjects, "cohort size")
      ->capture_default_str();
  synth_cmd->add_option("--videos", synth.config.n_videos, "trials per subject")
      ->capture_default_str();
  synth_cmd
      ->add_option("--trial-seconds", synth.config.trial_seconds,
                   "length of each recording")
      ->capture_default_str();
  synth_cmd->add_option("--fs-ecg", synth.config.fs_ecg, "ECG sampling rate")
      ->capture_default_str();
  synth_cmd->add_option("--fs-gsr", synth.config.fs_gsr, "GSR sampling rate")
      ->capture_default_str();
  synth_cmd
      ->add_option("--coupling", synth.config.coupling,
                   "personality-to-style coupling in [0,1]")
      ->capture_default_str();
  synth_cmd
      ->add_option("--noise-sd", synth.config.noise_sd, "sensor noise scale")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed, "master seed")
      ->envname("APEX_SEED")
      ->capture_default_str();

  ExtractArgs extract;
  auto* extract_cmd = app.add_subcommand(
      "extract", "read a dataset and write raw windowed features");
  add_data_options(extract_cmd, extract.data, true);
  extract_cmd->add_option("--out", extract.out, "output directory")
      ->envname("APEX_OUT")
      ->required();
  add_extraction_options(extract_cmd, extract.extraction);
  extract_cmd
      ->add_option("--jobs", extract.jobs,
                   "worker threads, 0 = all cores (outputs do not depend on "
                   "this)")
      ->envname("APEX_JOBS")
      ->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "leave-one-subject-out evaluation over a dataset");
  add_data_options(eval_cmd, eval.data, true);
  eval_cmd->add_option("--out", eval.out, "output directory")
      ->envname("APEX_OUT")
      ->required();
  eval_cmd->add_option("--task", eval.task, "prediction target")
      ->required()
      ->check(CLI::IsMember({"arousal", "valence"}));
  eval_cmd->add_option("--weights", eval.weights, "member weighting")
      ->check(CLI::IsMember({"attention", "uniform"}))
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "master seed")
      ->envname("APEX_SEED")
      ->capture_default_str();
  eval_cmd
      ->add_option("--jobs", eval.jobs,
                   "worker threads, 0 = all cores (outputs do not depend on "
                   "this)")
      ->envname("APEX_JOBS")
      ->capture_default_str();
  add_model_options(eval_cmd, eval.model);
  add_extraction_options(eval_cmd, eval.extraction);
  eval_cmd->add_option("--save-model", eval.save_model_dir,
                       "also fit one model on the full cohort and save the "
                       "bundle here");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand(
      "compare",
      "attention vs uniform weighting, both tasks, one table");
  add_data_options(compare_cmd, compare.data, false);
  compare_cmd->add_option("--out", compare.out,
                          "directory for compare.json (table always goes to "
                          "stdout)")
      ->envname("APEX_OUT");
  compare_cmd->add_option(
      "--coupling", compare.coupling,
      "generate the cohort instead: personality-to-style coupling in [0,1]");
  compare_cmd
      ->add_option("--subjects", compare.subjects,
                   "generated cohort size (with --coupling)")
      ->capture_default_str();
  compare_cmd
      ->add_option("--videos", compare.videos,
                   "generated trials per subject (with --coupling)")
      ->capture_default_str();
  compare_cmd
      ->add_option("--trial-seconds", compare.trial_seconds,
                   "generated recording length (with --coupling)")
      ->capture_default_str();
  compare_cmd->add_option("--seed", compare.seed, "master seed")
      ->envname("APEX_SEED")
      ->capture_default_str();
  compare_cmd
      ->add_option("--jobs", compare.jobs,
                   "worker threads, 0 = all cores (outputs do not depend on "
                   "this)")
      ->envname("APEX_JOBS")
      ->capture_default_str();
  add_model_options(compare_cmd, compare.model);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (app.got_subcommand(synth_cmd)) return cmd_synth(synth);
    if (app.got_subcommand(extract_cmd)) return cmd_extract(extract);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval);
    if (app.got_subcommand(compare_cmd)) return cmd_compare(compare);
  } catch (const apex::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const apex::InputError& e) {
    return fail("input", e.what(), 1);
  } catch (const apex::IngestError& e) {
    return fail("ingest", e.what(), 1);
  } catch (const apex::InsufficientSignalError& e) {
    return fail("insufficient_signal", e.what(), 1);
  } catch (const apex::SelectionError& e) {
    return fail("selection", e.what(), 1);
  } catch (const apex::FitError& e) {
    return fail("fit", e.what(), 1);
  } catch (const apex::ProtocolError& e) {
    return fail("protocol", e.what(), 1);
  } catch (const apex::Error& e) {
    return fail("internal", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
