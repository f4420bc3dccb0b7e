#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tarnet/config.hpp"
#include "tarnet/errors.hpp"
#include "tarnet/gradcheck.hpp"
#include "tarnet/metrics.hpp"
#include "tarnet/train.hpp"

namespace fs = std::filesystem;
using namespace tarnet;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;  // master seed; sets train.seed and data.seed
};

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig()
                                           : RunConfig::from_file(args.config_path);
  for (const auto& o : args.overrides) cfg.apply_override(o);
  if (args.seed >= 0) {
    cfg.train.seed = static_cast<uint64_t>(args.seed);
    cfg.data.seed = static_cast<uint64_t>(args.seed);
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file (key = value sections)");
  cmd->add_option("--set", args.overrides, "Override section.key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "Master seed (sets train.seed and data.seed)");
}

void dump_config(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/config.ini");
  if (!out) throw DataError("cannot write " + out_dir + "/config.ini");
  out << cfg.dump();
}

void apply_stages(RunConfig& cfg, const std::string& stages) {
  bool s = false, m = false, l = false;
  for (char c : stages) {
    if (c == 'S' || c == 's') s = true;
    else if (c == 'M' || c == 'm') m = true;
    else if (c == 'L' || c == 'l') l = true;
    else throw UsageError("--stages wants a combination of S, M, L");
  }
  if (!s) cfg.encoder.dilations_short.clear();
  if (!m) cfg.encoder.dilations_mid.clear();
  if (!l) cfg.encoder.dilations_long.clear();
}

Corpus corpus_for_split(const std::string& manifest, Split split) {
  Corpus all = read_manifest(manifest);
  Corpus filtered = filter_split(all, split);
  if (filtered.utterances.empty())
    throw UsageError("manifest " + manifest + " has no '" + split_name(split) +
                     "' utterances");
  return filtered;
}

int cmd_synth(const CommonArgs& common, const std::string& out_dir, bool no_wav) {
  RunConfig cfg = load_run_config(common);
  Corpus corpus = synth_corpus(cfg.data.speakers, cfg.data.utterances_per_speaker,
                               cfg.data.duration_seconds, cfg.data.seed,
                               cfg.frontend.sample_rate);
  assign_splits(corpus, cfg.split_spec());
  fs::create_directories(out_dir);
  if (!no_wav) corpus = materialize_corpus(corpus, out_dir);
  write_manifest(out_dir + "/manifest.csv", corpus);
  dump_config(cfg, out_dir);
  std::cout << "wrote " << corpus.utterances.size() << " utterances from "
            << corpus.num_speakers() << " speakers to " << out_dir << std::endl;
  return 0;
}

int cmd_ingest(const CommonArgs& common, const std::string& root,
               const std::string& out_dir) {
  RunConfig cfg = load_run_config(common);
  Corpus corpus = ingest_directory(root);
  assign_splits(corpus, cfg.split_spec());
  fs::create_directories(out_dir);
  write_manifest(out_dir + "/manifest.csv", corpus);
  dump_config(cfg, out_dir);
  std::cout << "ingested " << corpus.utterances.size() << " utterances from "
            << corpus.num_speakers() << " speakers" << std::endl;
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& manifest,
              const std::string& out_dir, const std::string& resume,
              const std::string& stages, const std::string& pooling) {
  RunConfig cfg = load_run_config(common);
  if (!stages.empty()) apply_stages(cfg, stages);
  if (!pooling.empty()) cfg.pooling = parse_pool_kind(pooling);

  Corpus all = read_manifest(manifest);
  Corpus train_split = filter_split(all, Split::kTrain);
  Corpus val_split = filter_split(all, Split::kVal);
  if (train_split.utterances.empty() || val_split.utterances.empty())
    throw UsageError("manifest has empty train or val split");

  dump_config(cfg, out_dir);

  TarnetModel model;
  std::map<std::string, std::string> resume_meta;
  const std::map<std::string, std::string>* resume_ptr = nullptr;
  if (!resume.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(resume);
    model = std::move(loaded.model);
    resume_meta = std::move(loaded.meta);
    resume_ptr = &resume_meta;
  } else {
    Rng init = Rng::stream(cfg.train.seed, "init");
    model = TarnetModel(cfg.model_config(all.num_speakers()), init);
  }

  // Width mismatches surface here, before step 0.
  if (model.config().num_mels != cfg.frontend.num_mels)
    throw ConfigError("model expects " + std::to_string(model.config().num_mels) +
                      " mel bands but the frontend is configured for " +
                      std::to_string(cfg.frontend.num_mels));
  if (model.config().num_speakers != all.num_speakers())
    throw ConfigError("model classifies " +
                      std::to_string(model.config().num_speakers) +
                      " speakers but the manifest has " +
                      std::to_string(all.num_speakers()));

  TrainResult result = train_loop(model, train_split, val_split, cfg.train,
                                  cfg.frontend, out_dir, cfg.as_meta(), resume_ptr,
                                  &std::cout);
  std::cout << "best val top-1: " << result.best_val_top1 << std::endl;
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& ckpt,
             const std::string& manifest, const std::string& split_name_arg,
             const std::string& compare, const std::string& out_dir, int jobs,
             int n_perm) {
  RunConfig cfg = load_run_config(common);
  Corpus corpus = corpus_for_split(manifest, parse_split(split_name_arg));

  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  EvalReport report = evaluate_model(loaded.model, corpus, cfg.frontend, jobs);
  std::cout << report.table();

  if (!out_dir.empty()) {
    dump_config(cfg, out_dir);
    std::ofstream csv(out_dir + "/eval.csv");
    csv << EvalReport::csv_header() << "\n" << report.csv_row(ckpt) << "\n";
  }

  if (!compare.empty()) {
    LoadedCheckpoint other = load_checkpoint(compare);
    EvalReport other_report = evaluate_model(other.model, corpus, cfg.frontend, jobs);
    std::cout << "\ncompared checkpoint top-1: " << other_report.top1 << "\n";
    ArResult ar = approx_randomization(report.top1_correctness(),
                                       other_report.top1_correctness(), n_perm,
                                       cfg.train.seed);
    std::cout << "ar test: observed |top1 diff| = " << ar.observed
              << ", p = " << ar.p_value << " (" << ar.n_permutations
              << " permutations)" << std::endl;
  }
  return 0;
}

int cmd_gradcheck(const CommonArgs& common, bool break_gln, double tolerance) {
  GradcheckOptions opts;
  if (common.seed >= 0) opts.seed = static_cast<uint64_t>(common.seed);
  opts.break_gln = break_gln;
  opts.tolerance = tolerance;
  GradcheckReport report = run_gradcheck(opts);
  std::cout << report.table();
  if (!report.passed()) {
    std::cout << "failing layers:";
    for (const auto& name : report.failing()) std::cout << " " << name;
    std::cout << std::endl;
    return 4;
  }
  return 0;
}

int cmd_inspect(const CommonArgs& common, int speakers, double search_target) {
  RunConfig cfg = load_run_config(common);
  const int n = speakers > 0 ? speakers : cfg.data.speakers;
  Rng rng = Rng::stream(cfg.train.seed, "init");
  TarnetModel model(cfg.model_config(n), rng);
  std::cout << model_summary(model, cfg.frontend);
  const int64_t counted = model.count_params();
  const int64_t formula = expected_param_count(model.config());
  if (counted != formula)
    throw NumericError("parameter count mismatch: stored arrays " +
                       std::to_string(counted) + " vs closed form " +
                       std::to_string(formula));
  if (search_target > 0) {
    std::cout << "\nconfigs within 1% of " << search_target << " parameters ("
              << n << " speakers):\n";
    std::cout << search_param_grid(model.config(), search_target, 0.01);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TARNet speaker identification toolkit"};
  app.require_subcommand(1);

  CommonArgs common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic speaker corpus");
  std::string synth_out;
  bool synth_no_wav = false;
  add_common(synth, common);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--no-wav", synth_no_wav,
                  "Keep utterances as synthesis specs in the manifest only");
  synth->add_option("--speakers", [&common](const std::vector<std::string>& v) {
    common.overrides.push_back("data.speakers=" + v[0]);
    return true;
  }, "Number of speakers");
  synth->add_option("--utts", [&common](const std::vector<std::string>& v) {
    common.overrides.push_back("data.utterances_per_speaker=" + v[0]);
    return true;
  }, "Utterances per speaker");
  synth->add_option("--duration", [&common](const std::vector<std::string>& v) {
    common.overrides.push_back("data.duration_seconds=" + v[0]);
    return true;
  }, "Utterance length in seconds");

  auto* ingest = app.add_subcommand("ingest", "Build a manifest from root/<speaker>/*.wav");
  std::string ingest_root, ingest_out;
  add_common(ingest, common);
  ingest->add_option("--root", ingest_root, "Dataset root directory")->required();
  ingest->add_option("--out", ingest_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model from a manifest");
  std::string train_manifest, train_out, train_resume, train_stages, train_pooling;
  add_common(train, common);
  train->add_option("--manifest", train_manifest, "Corpus manifest CSV")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--resume", train_resume, "Resume from a last.ckpt");
  train->add_option("--stages", train_stages, "Temporal stages to keep: S|M|L|SML");
  train->add_option("--pooling", train_pooling, "Pooling variant: max|avg|sp|asp");
  for (auto [flag, key] : {std::pair<const char*, const char*>{"--epochs", "train.epochs"},
                           {"--batch", "train.batch_size"},
                           {"--lr", "train.lr"},
                           {"--wd", "train.weight_decay"},
                           {"--crop", "train.crop_seconds"},
                           {"--jobs", "train.jobs"}}) {
    train->add_option(flag, [&common, key = std::string(key)](
                                const std::vector<std::string>& v) {
      common.overrides.push_back(key + "=" + v[0]);
      return true;
    }, std::string("Shortcut for --set ") + key);
  }

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_compare, eval_out;
  int eval_jobs = 0, eval_nperm = 10000;
  add_common(eval, common);
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--manifest", eval_manifest, "Corpus manifest CSV")->required();
  eval->add_option("--split", eval_split, "Split to evaluate (train|val|test)");
  eval->add_option("--compare", eval_compare,
                   "Second checkpoint for a paired significance test");
  eval->add_option("--out", eval_out, "Directory for eval.csv");
  eval->add_option("--jobs", eval_jobs, "Worker threads (0 = all cores)");
  eval->add_option("--n-perm", eval_nperm, "Permutation rounds for the ar test");

  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "Finite-difference verification of every gradient");
  bool gc_break_gln = false;
  double gc_tolerance = 1e-4;
  add_common(gradcheck, common);
  gradcheck->add_flag("--break-gln", gc_break_gln,
                      "Intentionally corrupt the gLN backward rule (self-test)");
  gradcheck->add_option("--tolerance", gc_tolerance, "Max relative error");

  auto* inspect = app.add_subcommand("inspect", "Architecture summary and parameter count");
  int inspect_speakers = 0;
  double inspect_search = 0.0;
  add_common(inspect, common);
  inspect->add_option("--speakers", inspect_speakers, "Classifier width (speaker count)");
  inspect->add_option("--search-params", inspect_search,
                      "List (C,D,H,E) grid configs within 1% of this parameter count");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(common, synth_out, synth_no_wav);
    if (ingest->parsed()) return cmd_ingest(common, ingest_root, ingest_out);
    if (train->parsed())
      return cmd_train(common, train_manifest, train_out, train_resume, train_stages,
                       train_pooling);
    if (eval->parsed())
      return cmd_eval(common, eval_ckpt, eval_manifest, eval_split, eval_compare,
                      eval_out, eval_jobs, eval_nperm);
    if (gradcheck->parsed()) return cmd_gradcheck(common, gc_break_gln, gc_tolerance);
    if (inspect->parsed()) return cmd_inspect(common, inspect_speakers, inspect_search);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return 4;
  }
  return 2;
}
