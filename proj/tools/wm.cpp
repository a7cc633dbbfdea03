// Command-line front end for the watermarking workbench: embed a backdoor
// mark into a classifier, verify it, attack it (black-box steal or white-box
// scrub), sweep steal timing, train/apply the activation-set detector, and
// inspect or plot run reports.
//
// Exit codes: 0 = success, 2 = a pipeline phase failed, 3 = configuration or
// usage error.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "wm/harness.hpp"
#include "wm/store.hpp"

namespace {

using namespace wm;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void print_phases(const RunReport& rep) {
  for (const PhaseRecord& p : rep.phases) {
    const char* status = p.skipped ? "skipped" : (p.error.empty() ? "ok" : "error");
    std::printf("phase %-16s %-8s %8.2fs", p.name.c_str(), status, p.wall_seconds);
    if (!p.error.empty()) std::printf("  %s", p.error.c_str());
    std::printf("\n");
  }
}

void print_metrics(const RunReport& rep) {
  for (const auto& [key, value] : rep.metrics.entries()) {
    std::printf("%s=%s\n", key.c_str(), value.c_str());
  }
}

int finish_run(const RunReport& rep, const std::string& report_path) {
  print_phases(rep);
  std::printf("total %.2fs\n", rep.total_wall_seconds);
  std::printf("report %s\n", report_path.c_str());
  return rep.all_ok() ? 0 : 2;
}

MatrixXf probe_prefix(const std::string& source, int count) {
  Dataset data = load_dataset(source);
  const int n = std::min(count, data.count());
  if (n <= 0) throw SizeError("probe source has no samples");
  std::vector<int> prefix(static_cast<std::size_t>(n));
  std::iota(prefix.begin(), prefix.end(), 0);
  return gather(data.pixels(), prefix);
}

std::vector<Network> load_models(const std::vector<std::string>& paths) {
  std::vector<Network> models;
  models.reserve(paths.size());
  for (const std::string& p : paths) models.push_back(load_checkpoint(p));
  return models;
}

// Loads the artifacts a standalone attack verb needs from an earlier embed
// run in the config's output directory.
struct AttackInputs {
  Network victim;
  TriggerSet trigger;
  Dataset pool;
  Dataset test;
  VerifyConfig vcfg;
};

AttackInputs load_attack_inputs(const ExperimentConfig& cfg) {
  const std::string out = cfg.resolved_output_dir();
  AttackInputs in;
  in.victim = load_checkpoint(out + "/marked.ckpt");
  in.trigger = load_trigger(out + "/trigger");
  Dataset corpus = load_dataset(cfg.train_data);
  SplitPlan plan{cfg.owner_fraction, cfg.resolved_split_seed(), cfg.overlap_split};
  in.pool = split_owner_attacker(corpus, plan).second;
  in.test = load_dataset(cfg.test_data).with_role(DatasetRole::kTest);
  in.vcfg = VerifyConfig{cfg.epsilon, corpus.num_classes()};
  return in;
}

RunReport attack_report_shell(const ExperimentConfig& cfg) {
  RunReport rep;
  rep.config_digest = cfg.digest();
  rep.scheme = trigger_scheme_name(cfg.trigger.scheme);
  rep.kind = "run";
  rep.environment = environment_note();
  return rep;
}

int cmd_blackbox(const ExperimentConfig& cfg) {
  AttackInputs in = load_attack_inputs(cfg);
  const std::string out = cfg.resolved_output_dir();
  RunReport rep = attack_report_shell(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  Series s_acc;
  s_acc.name = "blackbox.accuracy";
  Series s_ret;
  s_ret.name = "blackbox.retention";
  StealConfig scfg;
  scfg.surrogate_arch = in.victim.arch();
  scfg.train.max_epochs = cfg.steal_epochs;
  scfg.query_budget = cfg.query_budget;
  scfg.seed = cfg.resolved_blackbox_seed();
  scfg.cache_dir = cfg.cache_dir;
  scfg.train_hooks.on_epoch_end = [&](const Network& m, const EpochStats&) {
    const double t = seconds_since(t0);
    s_acc.x.push_back(t);
    s_acc.y.push_back(evaluate_accuracy(m, in.test));
    s_ret.x.push_back(t);
    s_ret.y.push_back(trigger_retention(m, in.trigger));
    return false;
  };
  BlackboxOutcome game =
      blackbox_game(in.victim, in.trigger, in.pool, in.test, scfg, in.vcfg, cfg.acc_tolerance);
  game.surrogate.provenance.config_digest = rep.config_digest;
  save_checkpoint(game.surrogate, out + "/blackbox-surrogate.ckpt");

  rep.phases.push_back({"blackbox", game.wall_seconds, "", false});
  rep.series.push_back(std::move(s_acc));
  rep.series.push_back(std::move(s_ret));
  rep.metrics.set_int("blackbox.win", game.win ? 1 : 0);
  rep.metrics.set_double("blackbox.victim_accuracy", game.victim_accuracy);
  rep.metrics.set_double("blackbox.accuracy", game.removal.accuracy);
  rep.metrics.set_double("blackbox.accuracy_drop", game.removal.accuracy_drop);
  rep.metrics.set_double("blackbox.retention", game.removal.retention);
  rep.metrics.set_int("blackbox.queries", game.queries_used);
  rep.metrics.set_double("blackbox.wall_seconds", game.wall_seconds);
  rep.metrics.set_double("blackbox.start_seconds", 0.0);
  rep.metrics.set_double("blackbox.end_seconds", seconds_since(t0));
  rep.total_wall_seconds = seconds_since(t0);

  const std::string path = out + "/report-blackbox.txt";
  rep.save(path);
  return finish_run(rep, path);
}

int cmd_whitebox(const ExperimentConfig& cfg) {
  AttackInputs in = load_attack_inputs(cfg);
  const std::string out = cfg.resolved_output_dir();
  RunReport rep = attack_report_shell(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  Series s_acc;
  s_acc.name = "whitebox.accuracy";
  Series s_ret;
  s_ret.name = "whitebox.retention";
  WhiteboxConfig wcfg;
  wcfg.reg_phase.max_epochs = cfg.reg_max_epochs;
  wcfg.fine_phase.max_epochs = cfg.fine_max_epochs;
  wcfg.retention_baseline = retention_baseline_for(cfg.trigger.scheme);
  wcfg.query_budget = cfg.query_budget;
  wcfg.seed = cfg.resolved_whitebox_seed();
  wcfg.observer = [&](const char* tag, const Network& m, const EpochStats& st) {
    const double t = seconds_since(t0);
    const bool reg = std::string(tag) == "reg";
    s_acc.x.push_back(t);
    s_acc.y.push_back(reg ? evaluate_accuracy(m, in.test) : st.monitored);
    s_ret.x.push_back(t);
    s_ret.y.push_back(reg ? st.monitored : trigger_retention(m, in.trigger));
  };
  WhiteboxOutcome game =
      whitebox_game(in.victim, in.trigger, in.pool, in.test, wcfg, in.vcfg, cfg.acc_tolerance);
  game.model.provenance.config_digest = rep.config_digest;
  save_checkpoint(game.model, out + "/whitebox-scrubbed.ckpt");

  rep.phases.push_back({"whitebox", game.wall_seconds, "", false});
  rep.series.push_back(std::move(s_acc));
  rep.series.push_back(std::move(s_ret));
  rep.metrics.set_int("whitebox.win", game.win ? 1 : 0);
  rep.metrics.set_double("whitebox.victim_accuracy", game.victim_accuracy);
  rep.metrics.set_double("whitebox.accuracy", game.removal.accuracy);
  rep.metrics.set_double("whitebox.accuracy_drop", game.removal.accuracy_drop);
  rep.metrics.set_double("whitebox.retention", game.removal.retention);
  rep.metrics.set_int("whitebox.reg_epochs", game.reg.epochs);
  rep.metrics.set_int("whitebox.fine_epochs", game.fine.epochs);
  rep.metrics.set_int("whitebox.not_converged", game.not_converged ? 1 : 0);
  rep.metrics.set_double("whitebox.wall_seconds", game.wall_seconds);
  rep.metrics.set_double("whitebox.start_seconds", 0.0);
  rep.metrics.set_double("whitebox.reg_end_seconds",
                         game.label_wall_seconds + game.reg.wall_seconds);
  rep.metrics.set_double("whitebox.end_seconds", seconds_since(t0));
  rep.total_wall_seconds = seconds_since(t0);

  const std::string path = out + "/report-whitebox.txt";
  rep.save(path);
  return finish_run(rep, path);
}

int cmd_verify(const ExperimentConfig& cfg, std::string model_path) {
  const std::string out = cfg.resolved_output_dir();
  if (model_path.empty()) model_path = out + "/marked.ckpt";
  Network model = load_checkpoint(model_path);
  TriggerSet trigger = load_trigger(out + "/trigger");
  const int classes =
      trigger.holdout.num_classes() > 0 ? trigger.holdout.num_classes() : 10;
  VerifyReport vr = verify(model, trigger, VerifyConfig{cfg.epsilon, classes});
  std::printf("verify_bit=%d\n", vr.accepted ? 1 : 0);
  std::printf("retention=%.6f\n", vr.retention);
  std::printf("mismatches=%d\n", vr.mismatches);
  std::printf("trigger_count=%d\n", vr.trigger_count);
  std::printf("epsilon=%g\n", vr.epsilon);
  return 0;
}

int cmd_report(const std::string& path, const std::string& csv_path,
               const std::vector<std::string>& compare_paths) {
  if (!compare_paths.empty()) {
    std::vector<RunReport> reports;
    reports.reserve(compare_paths.size());
    for (const std::string& p : compare_paths) reports.push_back(RunReport::load(p));
    std::fputs(compare_runtimes(reports).c_str(), stdout);
    return 0;
  }
  RunReport rep = RunReport::load(path);
  std::printf("kind=%s scheme=%s digest=%s\n", rep.kind.c_str(), rep.scheme.c_str(),
              rep.config_digest.c_str());
  std::printf("environment=%s\n", rep.environment.c_str());
  std::printf("total_wall_seconds=%.2f\n", rep.total_wall_seconds);
  print_phases(rep);
  print_metrics(rep);
  for (const Series& s : rep.series) {
    std::printf("series %s (%zu points)\n", s.name.c_str(), s.x.size());
  }
  if (!csv_path.empty()) {
    rep.save_csv(csv_path);
    std::printf("csv %s\n", csv_path.c_str());
  }
  return 0;
}

int cmd_plot(const std::string& report_path, std::string out_dir) {
  RunReport rep = RunReport::load(report_path);
  if (out_dir.empty()) {
    out_dir = (std::filesystem::path(report_path).parent_path() / "plots").string();
  }
  PlotOutcome out = emit_plots(rep, out_dir);
  for (const std::string& f : out.files) std::printf("plot %s\n", f.c_str());
  for (const std::string& n : out.notes) std::printf("note %s\n", n.c_str());
  return 0;
}

struct DetectTrainArgs {
  std::vector<std::string> clean, marked, heldout_clean, heldout_marked;
  std::string probe_data;
  int probes = 2000;
  std::string out_path;
  int rounds = 0;           // 0 keeps the library default
  int max_epochs = 0;       // 0 keeps the library default
  std::uint64_t seed = 1;
};

int cmd_detect_train(const DetectTrainArgs& args) {
  PIConfig cfg;
  cfg.seed = args.seed;
  if (args.rounds > 0) cfg.bootstrap_rounds = args.rounds;
  if (args.max_epochs > 0) cfg.max_epochs = args.max_epochs;
  MatrixXf probe = probe_prefix(args.probe_data, args.probes);
  DetectorTrainOutcome out = train_detector_from_models(
      load_models(args.clean), load_models(args.marked), load_models(args.heldout_clean),
      load_models(args.heldout_marked), probe, cfg);
  save_detector(args.out_path, out.detector);
  std::printf("train_sets=%d\n", out.train_sets);
  std::printf("heldout_sets=%d\n", out.heldout_sets);
  std::printf("heldout_set_accuracy=%.4f\n", out.heldout_set_accuracy);
  std::printf("epochs=%d\n", out.detector.record.epochs);
  std::printf("wall_seconds=%.2f\n", out.wall_seconds);
  for (const std::string& w : out.warnings) std::printf("warning %s\n", w.c_str());
  std::printf("detector %s\n", args.out_path.c_str());
  return 0;
}

int cmd_detect_run(const std::string& detector_path, const std::string& model_path,
                   const std::string& probe_data, int probes, std::uint64_t seed) {
  DetectorModel detector = load_detector(detector_path);
  Network model = load_checkpoint(model_path);
  PIConfig cfg;
  cfg.seed = seed;
  MatrixXf probe = probe_prefix(probe_data, probes);
  DetectReport dr = detect(detector, model, probe, cfg);
  std::printf("verdict=%d\n", dr.verdict);
  std::printf("mean_score=%.4f\n", dr.mean_score);
  std::printf("sets_scored=%d\n", dr.sets_scored);
  std::printf("votes_marked=%d\n", dr.votes_marked);
  for (const std::string& w : dr.warnings) std::printf("warning %s\n", w.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Backdoor watermarking workbench: embed a trigger-set mark into a small "
      "image classifier, verify it, attack it, and detect it."};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_override;
  std::uint64_t seed_override = 0;
  bool have_seed_override = false;

  // Run verbs take the config plus output/seed overrides; inspection verbs
  // (report, plot) take only the config, leaving --out free for their own use.
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config file")->required();
    sub->add_option("-o,--out", output_override, "override the output directory");
    sub->add_option("--seed", seed_override, "override the root seed")
        ->each([&](const std::string&) { have_seed_override = true; });
  };
  const auto add_config_only = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config file");
  };
  const auto load_cfg = [&]() {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!output_override.empty()) cfg.output_dir = output_override;
    if (have_seed_override) cfg.seed = seed_override;
    return cfg;
  };

  int rc = 0;

  CLI::App* train_clean =
      app.add_subcommand("train-clean", "train only the unmarked reference model");
  add_config(train_clean);
  train_clean->callback([&] {
    ExperimentConfig cfg = load_cfg();
    cfg.run_embed = false;
    RunReport rep = run_experiment(cfg);
    rc = finish_run(rep, cfg.resolved_output_dir() + "/report.txt");
  });

  CLI::App* embed = app.add_subcommand(
      "embed", "train the clean reference and the marked model, then verify both");
  add_config(embed);
  embed->callback([&] {
    ExperimentConfig cfg = load_cfg();
    cfg.run_blackbox = false;
    cfg.run_whitebox = false;
    cfg.detector_file.clear();
    RunReport rep = run_experiment(cfg);
    rc = finish_run(rep, cfg.resolved_output_dir() + "/report.txt");
  });

  CLI::App* run = app.add_subcommand(
      "run", "full pipeline: embed, verify and the attacks enabled in the config");
  add_config(run);
  run->callback([&] {
    ExperimentConfig cfg = load_cfg();
    RunReport rep = run_experiment(cfg);
    rc = finish_run(rep, cfg.resolved_output_dir() + "/report.txt");
  });

  std::string verify_model;
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "verify the stored mark against a model checkpoint");
  add_config(verify_cmd);
  verify_cmd->add_option("--model", verify_model,
                         "checkpoint to verify (default: the run's marked model)");
  verify_cmd->callback([&] { rc = cmd_verify(load_cfg(), verify_model); });

  CLI::App* attack = app.add_subcommand("attack", "run a removal attack on an embedded mark");
  attack->require_subcommand(1);
  CLI::App* attack_bb =
      attack->add_subcommand("blackbox", "steal a surrogate through the prediction oracle");
  add_config(attack_bb);
  attack_bb->callback([&] { rc = cmd_blackbox(load_cfg()); });
  CLI::App* attack_wb = attack->add_subcommand(
      "whitebox", "regularize the mark away, then fine-tune accuracy back");
  add_config(attack_wb);
  attack_wb->callback([&] { rc = cmd_whitebox(load_cfg()); });

  std::vector<int> sweep_epochs;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "steal surrogates from marked-model snapshots at the listed epochs");
  add_config(sweep);
  sweep->add_option("--epochs", sweep_epochs, "snapshot epochs, e.g. 1,5,30")
      ->required()
      ->delimiter(',');
  sweep->callback([&] {
    ExperimentConfig cfg = load_cfg();
    RunReport rep = sweep_steal_during_training(cfg, sweep_epochs);
    rc = finish_run(rep, cfg.resolved_output_dir() + "/report.txt");
  });

  CLI::App* detect = app.add_subcommand("detect", "train or apply the activation-set detector");
  detect->require_subcommand(1);

  DetectTrainArgs dt;
  CLI::App* detect_train = detect->add_subcommand(
      "train", "train a detector from labeled model checkpoints");
  detect_train->add_option("--clean", dt.clean, "unmarked training checkpoints")->required();
  detect_train->add_option("--marked", dt.marked, "marked training checkpoints")->required();
  detect_train->add_option("--heldout-clean", dt.heldout_clean, "unmarked held-out checkpoints");
  detect_train->add_option("--heldout-marked", dt.heldout_marked, "marked held-out checkpoints");
  detect_train->add_option("--probe-data", dt.probe_data, "probe input source")->required();
  detect_train->add_option("--probes", dt.probes, "number of probe inputs");
  detect_train->add_option("--rounds", dt.rounds, "bootstrap sets per class group");
  detect_train->add_option("--max-epochs", dt.max_epochs, "detector training epoch cap");
  detect_train->add_option("--seed", dt.seed, "detector training seed");
  detect_train->add_option("--out", dt.out_path, "detector checkpoint to write")->required();
  detect_train->callback([&] { rc = cmd_detect_train(dt); });

  std::string dr_detector, dr_model, dr_probe_data;
  int dr_probes = 2000;
  std::uint64_t dr_seed = 1;
  CLI::App* detect_run =
      detect->add_subcommand("run", "score one model with a trained detector");
  detect_run->add_option("--detector", dr_detector, "detector checkpoint")->required();
  detect_run->add_option("--model", dr_model, "model checkpoint to score")->required();
  detect_run->add_option("--probe-data", dr_probe_data, "probe input source")->required();
  detect_run->add_option("--probes", dr_probes, "number of probe inputs");
  detect_run->add_option("--seed", dr_seed, "bootstrap seed");
  detect_run->callback(
      [&] { rc = cmd_detect_run(dr_detector, dr_model, dr_probe_data, dr_probes, dr_seed); });

  std::string report_file, report_csv;
  std::vector<std::string> compare_files;
  CLI::App* report_cmd = app.add_subcommand("report", "print a stored run report");
  add_config_only(report_cmd);
  report_cmd->add_option("--file", report_file, "report file (default: the run's report.txt)");
  report_cmd->add_option("--csv", report_csv, "also write the series as CSV");
  report_cmd->add_option("--compare", compare_files,
                         "compare wall times across two or more report files");
  report_cmd->callback([&] {
    std::string path = report_file;
    if (path.empty() && compare_files.empty()) {
      if (config_path.empty()) {
        throw ConfigError("report needs --file, --compare or a config");
      }
      path = load_cfg().resolved_output_dir() + "/report.txt";
    }
    rc = cmd_report(path, report_csv, compare_files);
  });

  std::string plot_file, plot_out;
  CLI::App* plot_cmd = app.add_subcommand("plot", "render a report's curves as PNG files");
  add_config_only(plot_cmd);
  plot_cmd->add_option("--file", plot_file, "report file (default: the run's report.txt)");
  plot_cmd->add_option("--out", plot_out, "directory for the images");
  plot_cmd->callback([&] {
    std::string path = plot_file;
    if (path.empty()) {
      if (config_path.empty()) throw ConfigError("plot needs --file or a config");
      path = load_cfg().resolved_output_dir() + "/report.txt";
    }
    rc = cmd_plot(path, plot_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "wm: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "wm: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "wm: %s\n", e.what());
    return 2;
  }
  return rc;
}
