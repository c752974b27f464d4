// Wayside monitoring pipeline CLI: synthetic passages, axle semantics,
// embeddings, classification, continual-learning runs, and the statistics
// layer, orchestrated over flat files.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "wayside/experiment.hpp"
#include "wayside/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wayside;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

experiment::ExperimentConfig load_config(const std::string& config_path, std::uint64_t seed,
                                         const std::string& out, int jobs) {
  experiment::ExperimentConfig cfg;
  if (!config_path.empty())
    cfg = experiment::ExperimentConfig::from_json(json::parse(io::read_file(config_path)));
  if (seed != 0) cfg.master_seed = seed;
  if (!out.empty()) cfg.output_dir = out;
  if (jobs > 0) cfg.jobs = jobs;
  return cfg;
}

int cmd_synth(const experiment::ExperimentConfig& cfg, const std::string& passage_config,
              int count) {
  const fs::path dir = fs::path(cfg.output_dir) / "synth";
  json meta = json::array();
  if (!passage_config.empty()) {
    std::optional<double> snr;
    synth::PassageSpec spec =
        io::passage_from_config(json::parse(io::read_file(passage_config)), &snr);
    synth::SynthConfig scfg = cfg.synth;
    scfg.accel_snr_db = snr;
    if (!snr) scfg.strain_noise_ue = 0.0;
    const auto rec = synth::synthesize_passage(spec, scfg);
    io::write_waveform_csv(dir / "passage_0.csv", rec);
    json m = io::passage_to_json(rec.truth);
    m["waveform"] = "passage_0.csv";
    m["wheel_pass_times_s"] = rec.wheel_pass_times_s;
    meta.push_back(m);
  } else {
    const auto recs =
        experiment::sample_mixed_corpus(cfg, count, 0.5, derive_seed(cfg.master_seed, 1));
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const std::string name = "passage_" + std::to_string(i) + ".csv";
      io::write_waveform_csv(dir / name, recs[i]);
      json m = io::passage_to_json(recs[i].truth);
      m["waveform"] = name;
      m["wheel_pass_times_s"] = recs[i].wheel_pass_times_s;
      meta.push_back(m);
    }
  }
  io::write_file(dir / "passages.json", meta.dump(2));
  std::cout << "wrote " << meta.size() << " passage(s) under " << dir.string() << "\n";
  return kExitOk;
}

int cmd_peaks(const std::string& algo, double sensitivity, const std::string& input,
              const std::string& out, int lookahead) {
  const io::Waveform w = io::read_waveform_csv(input);
  const peaks::PeakSet ps =
      peaks::detect(peaks::algorithm_by_name(algo), w.strain, sensitivity, lookahead);
  const peaks::SemanticFeatures sem = peaks::extract_semantics(ps, w.sample_rate_hz);
  const json j = io::peaks_to_json(ps, sem);
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    io::write_file(out, j.dump(2));
  return kExitOk;
}

int cmd_embed_train(const experiment::ExperimentConfig& cfg, const std::string& windows_dir,
                    const std::string& model_path) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(windows_dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no waveform CSVs under " + windows_dir);
  Eigen::MatrixXd windows(cfg.window_length, static_cast<Eigen::Index>(files.size()));
  for (std::size_t i = 0; i < files.size(); ++i) {
    const io::Waveform w = io::read_waveform_csv(files[i]);
    windows.col(static_cast<Eigen::Index>(i)) =
        embed::SignalWindow::from_signal(w.accel, cfg.window_length).values;
  }
  embed::VaeConfig vc = cfg.vae;
  vc.input_dim = cfg.window_length;
  vc.seed = derive_seed(cfg.master_seed, 2);
  const embed::TrainedVae model = embed::train_vae(windows, vc);
  io::save_vae(model_path, model);
  std::cout << "trained VAE on " << files.size() << " windows; final val loss "
            << model.val_loss.back() << "\n";
  return kExitOk;
}

int cmd_embed_apply(const std::string& model_path, const std::string& input,
                    const std::string& out) {
  const embed::TrainedVae model = io::load_vae(model_path);
  const io::Waveform w = io::read_waveform_csv(input);
  const embed::SignalWindow win =
      embed::SignalWindow::from_signal(w.accel, model.params.input_dim);
  const embed::Embedding e = embed::encode(win.values, model.params);
  json j;
  j["mu"] = std::vector<double>(e.mu.data(), e.mu.data() + e.mu.size());
  j["logvar"] = std::vector<double>(e.logvar.data(), e.logvar.data() + e.logvar.size());
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    io::write_file(out, j.dump(2));
  return kExitOk;
}

Eigen::VectorXd labels_of(const fuse::Dataset& ds) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(ds.rows.size()));
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = ds.rows[i].label;
  return y;
}

// Reconstruct the fusion layout from a dataset CSV header.
fuse::FusionLayout layout_from_csv_header(const std::string& dataset_path) {
  const std::string head = io::read_file(dataset_path);
  const std::string header = head.substr(0, head.find('\n'));
  fuse::FusionLayout layout;
  std::istringstream ss(header);
  std::string col;
  while (std::getline(ss, col, ',')) {
    if (col.empty() || col == "label" || col == "soft_label" || col == "domain_id") continue;
    if (col == "z")
      layout.has_count = true;
    else if (col == "load")
      layout.has_context = true;
    else if (col == "speed")
      continue;  // counted with "load"
    else if (col[0] == 's')
      ++layout.embedding_dim;
    else if (col[0] == 'x')
      ++layout.index_slots;
    else if (col[0] == 'y')
      ++layout.deformation_slots;
  }
  return layout;
}

int cmd_clf(const std::string& action, const std::string& dataset_path,
            const std::string& model_path, int trials, std::uint64_t seed) {
  const fuse::FusionLayout layout = layout_from_csv_header(dataset_path);
  const fuse::Dataset ds = io::read_dataset_csv(dataset_path, layout);
  const Eigen::VectorXd y = labels_of(ds);
  if (action == "train") {
    gbdt::GbdtConfig gc;
    gc.seed = seed;
    const gbdt::GbdtModel m = gbdt::train_gbdt(ds.matrix(), y, gc);
    io::save_gbdt(model_path, m);
    std::cout << "trained on " << ds.rows.size() << " rows\n";
  } else if (action == "eval") {
    const gbdt::GbdtModel m = io::load_gbdt(model_path);
    const gbdt::Metrics metrics = gbdt::evaluate(m, ds.matrix(), y);
    json j;
    j["accuracy"] = metrics.accuracy;
    j["precision"] = metrics.precision;
    j["recall"] = metrics.recall;
    j["f1"] = metrics.f1;
    if (metrics.auc_roc) j["auc_roc"] = *metrics.auc_roc;
    std::cout << j.dump(2) << "\n";
  } else if (action == "tune") {
    const gbdt::SearchResult r = gbdt::random_search(ds.matrix(), y, trials, seed);
    json j;
    j["best_cv_accuracy"] = r.best_accuracy;
    j["trials"] = r.trials.size();
    j["best"] = {{"alpha", r.best.alpha},
                 {"colsample_bytree", r.best.colsample_bytree},
                 {"subsample", r.best.subsample},
                 {"learning_rate", r.best.learning_rate},
                 {"max_depth", r.best.max_depth},
                 {"min_child_weight", r.best.min_child_weight},
                 {"n_estimators", r.best.n_estimators}};
    std::cout << j.dump(2) << "\n";
  } else {
    throw ConfigError("clf action must be train|eval|tune");
  }
  return kExitOk;
}

int cmd_cl(experiment::ExperimentConfig cfg, const std::string& strategy, int memory, double beta,
           const std::string& seeds_csv, const std::string& order_csv) {
  if (beta >= 0.0) cfg.cl_beta = beta;
  if (!order_csv.empty()) {
    cfg.scenario_order.clear();
    std::istringstream ss(order_csv);
    std::string name;
    while (std::getline(ss, name, ','))
      cfg.scenario_order.push_back(replay::domain_by_name(name));
  }
  if (!seeds_csv.empty()) {
    int count = 0;
    std::istringstream ss(seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) ++count;
    cfg.cl_seeds = count;
  }
  experiment::ClGridResult grid = experiment::run_cl_grid(cfg);
  if (!strategy.empty() && strategy != "all") {
    const replay::ReplayPolicy wanted = replay::policy_by_name(strategy);
    std::vector<experiment::ClCell> kept;
    for (auto& c : grid.cells) {
      if (c.policy != wanted) continue;
      if (memory > 0 && static_cast<int>(c.memory) != memory) continue;
      kept.push_back(std::move(c));
    }
    grid.cells = std::move(kept);
  }
  experiment::write_cl_csvs(fs::path(cfg.output_dir) / "cl", grid);
  json metrics = json::array();
  for (const auto& c : grid.cells) {
    metrics.push_back({{"strategy", replay::to_string(c.policy)},
                       {"memory", c.memory},
                       {"seed", c.seed_index},
                       {"fwt", c.fwt},
                       {"bwt", c.bwt},
                       {"im", c.im},
                       {"kgr", c.kgr}});
  }
  io::write_file(fs::path(cfg.output_dir) / "cl" / "cl_metrics.json", metrics.dump(2));
  std::cout << "wrote " << grid.cells.size() << " continual-learning cells\n";
  return kExitOk;
}

int cmd_stats(const experiment::ExperimentConfig& cfg) {
  const experiment::AdGridResult ad = experiment::run_ad_grid(cfg);
  const experiment::StatsResult st = experiment::run_stats(ad, cfg.ad_seeds, cfg.tuning_trials);
  experiment::write_stats_csvs(fs::path(cfg.output_dir) / "stats", st);
  std::cout << "wrote " << st.friedman_rows.size() << " omnibus rows and "
            << st.shaffer_rows.size() << " pairwise rows\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wayside: synthetic wayside monitoring and continual fault detection"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--seed", seed, "master seed override");
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--jobs", jobs, "worker threads for grid cells");

  auto* synth_cmd = app.add_subcommand("synth", "generate passages");
  std::string passage_config;
  int synth_count = 10;
  synth_cmd->add_option("--passage-config", passage_config, "single-passage JSON config");
  synth_cmd->add_option("--count", synth_count, "number of mixed passages");

  auto* peaks_cmd = app.add_subcommand("peaks", "detect axles in a waveform");
  std::string algo = "sd", input, peaks_out;
  double sensitivity = 0.85;
  int lookahead = 50;
  peaks_cmd->add_option("--algo", algo, "tb|pd|dp|sd")->required();
  peaks_cmd->add_option("--sensitivity", sensitivity, "sensitivity in (0,1]");
  peaks_cmd->add_option("--input", input, "waveform CSV")->required();
  peaks_cmd->add_option("--out", peaks_out, "output JSON (stdout when omitted)");
  peaks_cmd->add_option("--lookahead", lookahead, "pd lookahead samples");

  auto* embed_cmd = app.add_subcommand("embed", "train or apply the VAE");
  std::string embed_action, windows_dir, model_path = "vae_model.bin", embed_input, embed_out;
  embed_cmd->add_option("action", embed_action, "train|apply")->required();
  embed_cmd->add_option("--windows", windows_dir, "directory of waveform CSVs");
  embed_cmd->add_option("--model", model_path, "model file path");
  embed_cmd->add_option("--input", embed_input, "waveform CSV to encode");
  embed_cmd->add_option("--out", embed_out, "output JSON");

  auto* clf_cmd = app.add_subcommand("clf", "train/evaluate/tune the classifier");
  std::string clf_action, dataset_path, clf_model = "gbdt_model.json";
  int trials = 50;
  clf_cmd->add_option("action", clf_action, "train|eval|tune")->required();
  clf_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
  clf_cmd->add_option("--model", clf_model, "model JSON path");
  clf_cmd->add_option("--trials", trials, "random-search trials");

  auto* cl_cmd = app.add_subcommand("cl", "continual-learning runs");
  std::string cl_action, cl_strategy = "all", cl_seeds, cl_order;
  int cl_memory = 0;
  double cl_beta = -1.0;
  cl_cmd->add_option("action", cl_action, "run")->required();
  cl_cmd->add_option("--strategy", cl_strategy, "baseline|rs|lb|prs|plb|all");
  cl_cmd->add_option("--memory", cl_memory, "200 or 800 (0 = both)");
  cl_cmd->add_option("--beta", cl_beta, "replay coefficient");
  cl_cmd->add_option("--seeds", cl_seeds, "comma list; its length sets the seed count");
  cl_cmd->add_option("--scenario-order", cl_order, "comma list of domain names");

  app.add_subcommand("stats", "Friedman and Shaffer over the AD grid");
  app.add_subcommand("report", "write report.md for an output directory");
  app.add_subcommand("run-all", "full experiment pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    const experiment::ExperimentConfig cfg = load_config(config_path, seed, out_dir, jobs);
    if (app.got_subcommand("synth")) return cmd_synth(cfg, passage_config, synth_count);
    if (app.got_subcommand("peaks"))
      return cmd_peaks(algo, sensitivity, input, peaks_out, lookahead);
    if (app.got_subcommand("embed")) {
      if (embed_action == "train") return cmd_embed_train(cfg, windows_dir, model_path);
      if (embed_action == "apply") return cmd_embed_apply(model_path, embed_input, embed_out);
      throw ConfigError("embed action must be train|apply");
    }
    if (app.got_subcommand("clf"))
      return cmd_clf(clf_action, dataset_path, clf_model, trials, cfg.master_seed);
    if (app.got_subcommand("cl")) {
      if (cl_action != "run") throw ConfigError("cl action must be run");
      return cmd_cl(cfg, cl_strategy, cl_memory, cl_beta, cl_seeds, cl_order);
    }
    if (app.got_subcommand("stats")) return cmd_stats(cfg);
    if (app.got_subcommand("report")) {
      experiment::emit_report(cfg.output_dir);
      return kExitOk;
    }
    if (app.got_subcommand("run-all")) {
      const experiment::Manifest manifest = experiment::run_all(cfg);
      double total = 0.0;
      for (const auto& c : manifest.wall_clock) total += c.seconds;
      std::cout << "run-all finished in " << total << " s; " << manifest.files.size()
                << " files under " << cfg.output_dir << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitOk;
}
