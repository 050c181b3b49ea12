// Command-line front door for the pipeline: synthesize data, build imitated
// anomalies, train any variant, score, evaluate, and run the full ablation.
//
// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
// failure during training.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ran/checkpoint.hpp"
#include "ran/dataset.hpp"
#include "ran/error.hpp"
#include "ran/imitation.hpp"
#include "ran/model.hpp"
#include "ran/scoring.hpp"
#include "ran/training.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageFailure {
  std::string message;
};

// Last-resort seed default: flag beats config file beats RAN_SEED beats 0.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value) {
  if (opt->count() > 0) return flag_value;
  const char* env = std::getenv("RAN_SEED");
  if (env == nullptr || *env == '\0') return flag_value;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0')
    throw UsageFailure{"RAN_SEED must be a base-10 unsigned integer, got \"" + std::string(env) +
                       "\""};
  return static_cast<std::uint64_t>(v);
}

// Feed a key = value file through the subcommand's own option table. Options
// already set on the command line stay untouched, so flags override the file.
void apply_config_file(CLI::App* sub, const CLI::Option* opt, const std::string& path) {
  if (opt->count() == 0) return;
  std::ifstream in(path);
  if (!in) throw UsageFailure{"cannot read config file: " + path};
  sub->parse_from_stream(in);
}

CLI::Option* add_config_option(CLI::App* sub, std::string& slot) {
  sub->allow_config_extras(CLI::config_extras_mode::error);
  return sub->add_option("--config", slot, "Config file (key = value; flags override)")
      ->configurable(false)
      ->check(CLI::ExistingFile);
}

// The resolved configuration lands in the output directory before any work,
// so the directory alone reproduces the run.
void echo_config(const CLI::App& sub, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string text = sub.config_to_str(true, false);
  const std::string path = (fs::path(out_dir) / "config.txt").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ran::IoError("cannot write " + path);
  std::fwrite(text.data(), 1, text.size(), f);
  if (std::fclose(f) != 0) throw ran::IoError("short write to " + path);
}

std::string dataset_stem(const std::string& input) { return fs::path(input).stem().string(); }

ran::Matrix normal_rows(const ran::LabeledDataset& ds, int normal_label) {
  int count = 0;
  for (int l : ds.labels)
    if (l == normal_label) ++count;
  if (count == 0)
    throw ran::ArgumentError("no rows carry the normal label " + std::to_string(normal_label));
  ran::Matrix out(count, ds.m());
  int r = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.labels[static_cast<std::size_t>(i)] != normal_label) continue;
    for (int j = 0; j < ds.m(); ++j) out.at(r, j) = ds.values.at(i, j);
    ++r;
  }
  return out;
}

struct SynthArgs {
  std::string profile = "sine_with_spikes";
  int n_normal = 50;
  int n_anomaly = 10;
  int m = 64;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
};

struct ImitateArgs {
  std::string input;
  int normal_label = 0;
  double c = 0.1;
  double factor = 4.0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string config;
};

struct TrainArgs {
  std::string input;
  int normal_label = 0;
  double test_fraction = 0.2;
  std::string variant = "RAN";
  int latent_dim = 32;
  int epochs = 200;
  int batch_size = 32;
  double lambda = 10.0;
  double c = 0.1;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string config;
};

struct ScoreArgs {
  std::string model;
  std::string input;
  double calib_lo = 0.0;
  double calib_hi = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string config;
};

struct EvalArgs {
  std::string model;
  std::string input;
  int normal_label = 0;
  double test_fraction = 0.2;
  int bins = 20;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string config;
};

struct AblateArgs {
  std::string input;
  int normal_label = 0;
  double test_fraction = 0.2;
  int latent_dim = 32;
  int epochs = 200;
  int batch_size = 32;
  double lambda = 10.0;
  double c = 0.1;
  double lr = 1e-3;
  int bins = 20;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string config;
};

int run_synth(const SynthArgs& a) {
  if (a.profile != "sine_with_spikes")
    throw ran::ArgumentError("unknown profile: " + a.profile);
  auto ds = ran::make_synthetic(ran::SyntheticProfile::SineWithSpikes, a.n_normal, a.n_anomaly,
                                a.m, a.noise, a.seed);
  ran::save_dataset(ds, a.out);
  std::printf("wrote %d rows (%d normal, %d anomalous) to %s\n", ds.n(), a.n_normal, a.n_anomaly,
              a.out.c_str());
  return 0;
}

int run_imitate(const CLI::App& sub, const ImitateArgs& a) {
  echo_config(sub, a.out_dir);
  auto ds = ran::znormalize(ran::load_dataset(a.input));
  auto x_nor = normal_rows(ds, a.normal_label);
  auto stats = ran::column_stats(x_nor);
  auto result = ran::imitate_detailed(x_nor, stats, {a.c, a.seed}, a.factor);

  ran::LabeledDataset imi;
  imi.values = result.values;
  imi.labels.assign(static_cast<std::size_t>(result.values.rows), 1);
  ran::save_dataset(imi, (fs::path(a.out_dir) / "x_imi.csv").string());

  const std::string manifest = (fs::path(a.out_dir) / "replaced.csv").string();
  std::FILE* f = std::fopen(manifest.c_str(), "wb");
  if (!f) throw ran::IoError("cannot write " + manifest);
  std::fputs("row,col\n", f);
  for (std::size_t i = 0; i < result.replaced.size(); ++i)
    for (int col : result.replaced[i]) std::fprintf(f, "%zu,%d\n", i, col);
  if (std::fclose(f) != 0) throw ran::IoError("short write to " + manifest);

  std::printf("imitated %d rows into %s\n", result.values.rows, a.out_dir.c_str());
  return 0;
}

ran::ArchConfig arch_for(int m, int latent_dim, ran::Variant variant) {
  ran::ArchConfig arch;
  arch.m = m;
  arch.latent_dim = latent_dim;
  arch.variant = variant;
  return arch;
}

int run_train(const CLI::App& sub, const TrainArgs& a) {
  echo_config(sub, a.out_dir);
  auto ds = ran::znormalize(ran::load_dataset(a.input));
  auto split = ran::split_normal_anomaly(ds, a.normal_label, a.test_fraction, a.seed);
  auto stats = ran::column_stats(split.x_nor);

  ran::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.lambda = a.lambda;
  tc.corrupt_level = a.c;
  tc.adam.learning_rate = a.lr;
  tc.seed = a.seed;
  auto arch = arch_for(ds.m(), a.latent_dim, ran::parse_variant(a.variant));

  auto result = ran::train<float>(split.x_nor, stats, tc, arch);
  ran::save_checkpoint(result.params, (fs::path(a.out_dir) / "model.ranmodel").string());
  ran::save_loss_record(result.record, (fs::path(a.out_dir) / "loss.csv").string());
  std::printf("trained %s on %d rows for %d epochs, final L_AE %.9g\n",
              ran::variant_name(arch.variant), split.x_nor.rows, a.epochs,
              result.record.l_ae.back());
  return 0;
}

int run_score(const CLI::App& sub, const ScoreArgs& a, bool lo_given, bool hi_given) {
  if (lo_given != hi_given)
    throw UsageFailure{"--calib-lo and --calib-hi must be given together"};
  echo_config(sub, a.out_dir);
  auto ds = ran::znormalize(ran::load_dataset(a.input));
  auto params = ran::load_checkpoint(a.model, ds.m());

  ran::ScoreReport report;
  report.dataset = dataset_stem(a.input);
  report.seed = a.seed;
  report.labels = ds.labels;
  report.rec_errors = ran::reconstruction_errors(params, ds.values);
  report.ano_scores = lo_given ? ran::anomaly_scores(report.rec_errors, a.calib_lo, a.calib_hi)
                               : ran::anomaly_scores(report.rec_errors);
  ran::save_score_csv(report, (fs::path(a.out_dir) / "scores.csv").string());
  std::printf("scored %d rows into %s\n", ds.n(), a.out_dir.c_str());
  return 0;
}

int run_eval(const CLI::App& sub, const EvalArgs& a) {
  echo_config(sub, a.out_dir);
  auto ds = ran::znormalize(ran::load_dataset(a.input));
  auto split = ran::split_normal_anomaly(ds, a.normal_label, a.test_fraction, a.seed);
  auto params = ran::load_checkpoint(a.model, ds.m());

  auto report = ran::evaluate(params, split, a.bins, dataset_stem(a.input), a.seed);
  ran::save_report_json(report, (fs::path(a.out_dir) / "report.json").string());
  ran::save_score_csv(report, (fs::path(a.out_dir) / "scores.csv").string());
  ran::save_histogram_csv(report.histogram, (fs::path(a.out_dir) / "histogram.csv").string());
  std::printf("AUC-ROC %.9g on %zu test rows\n", report.auc, report.rec_errors.size());
  return 0;
}

int run_ablate(const CLI::App& sub, const AblateArgs& a) {
  echo_config(sub, a.out_dir);
  auto ds = ran::znormalize(ran::load_dataset(a.input));
  auto split = ran::split_normal_anomaly(ds, a.normal_label, a.test_fraction, a.seed);
  auto stats = ran::column_stats(split.x_nor);

  const ran::Variant variants[] = {ran::Variant::RAN, ran::Variant::LAE_FCN,
                                   ran::Variant::AE_FCN, ran::Variant::AE};
  double aucs[4] = {};
  for (int v = 0; v < 4; ++v) {
    ran::TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.lambda = a.lambda;
    tc.corrupt_level = a.c;
    tc.adam.learning_rate = a.lr;
    tc.seed = a.seed + static_cast<std::uint64_t>(v);
    auto arch = arch_for(ds.m(), a.latent_dim, variants[v]);

    auto result = ran::train<float>(split.x_nor, stats, tc, arch);
    const std::string name = ran::variant_name(variants[v]);
    ran::save_checkpoint(result.params,
                         (fs::path(a.out_dir) / ("model_" + name + ".ranmodel")).string());
    ran::save_loss_record(result.record,
                          (fs::path(a.out_dir) / ("loss_" + name + ".csv")).string());
    auto report = ran::evaluate(result.params, split, a.bins, dataset_stem(a.input), tc.seed);
    ran::save_report_json(report,
                          (fs::path(a.out_dir) / ("report_" + name + ".json")).string());
    aucs[v] = report.auc;
    std::printf("%s AUC-ROC %.9g\n", name.c_str(), report.auc);
  }

  const std::string table = (fs::path(a.out_dir) / "ablation.csv").string();
  std::FILE* f = std::fopen(table.c_str(), "wb");
  if (!f) throw ran::IoError("cannot write " + table);
  std::fputs("dataset,RAN,LAE-FCN,AE-FCN,AE\n", f);
  std::fprintf(f, "%s,%.9g,%.9g,%.9g,%.9g\n", dataset_stem(a.input).c_str(), aucs[0], aucs[1],
               aucs[2], aucs[3]);
  if (std::fclose(f) != 0) throw ran::IoError("short write to " + table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially trained autoencoder pipeline for subsequence anomaly detection"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  auto* sa_cfg = add_config_option(synth, sa.config);
  synth->add_option("--profile", sa.profile, "Synthetic profile")->default_str(sa.profile);
  synth->add_option("--n-normal", sa.n_normal, "Normal rows")->default_val(sa.n_normal);
  synth->add_option("--n-anomaly", sa.n_anomaly, "Anomalous rows")->default_val(sa.n_anomaly);
  synth->add_option("--m", sa.m, "Subsequence length")->default_val(sa.m);
  synth->add_option("--noise", sa.noise, "Gaussian noise level")->default_val(sa.noise);
  auto* sa_seed = synth->add_option("--seed", sa.seed, "Random seed")->default_val(sa.seed);
  synth->add_option("-o,--out", sa.out, "Output dataset file")->required();

  ImitateArgs ia;
  auto* imitate = app.add_subcommand("imitate", "Build imitated anomalies from normal rows");
  auto* ia_cfg = add_config_option(imitate, ia.config);
  imitate->add_option("-i,--input", ia.input, "Labeled dataset file")->required();
  imitate->add_option("--normal-label", ia.normal_label, "Label of normal rows")
      ->default_val(ia.normal_label);
  imitate->add_option("--c", ia.c, "Corrupt level in [0,1]")->default_val(ia.c);
  imitate->add_option("--factor", ia.factor, "Replacement offset in sigmas")
      ->default_val(ia.factor);
  auto* ia_seed = imitate->add_option("--seed", ia.seed, "Random seed")->default_val(ia.seed);
  imitate->add_option("-o,--out", ia.out_dir, "Output directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one variant on a labeled dataset");
  auto* ta_cfg = add_config_option(train, ta.config);
  train->add_option("-i,--input", ta.input, "Labeled dataset file")->required();
  train->add_option("--normal-label", ta.normal_label, "Label of normal rows")
      ->default_val(ta.normal_label);
  train->add_option("--test-fraction", ta.test_fraction, "Normal fraction held out for testing")
      ->default_val(ta.test_fraction);
  train->add_option("--variant", ta.variant, "RAN, LAE-FCN, AE-FCN, or AE")
      ->default_str(ta.variant);
  train->add_option("--latent-dim", ta.latent_dim, "Latent vector length")
      ->default_val(ta.latent_dim);
  train->add_option("--epochs", ta.epochs, "Training epochs")->default_val(ta.epochs);
  train->add_option("--batch-size", ta.batch_size, "Mini-batch size")->default_val(ta.batch_size);
  train->add_option("--lambda", ta.lambda, "Latent-error weight")->default_val(ta.lambda);
  train->add_option("--c", ta.c, "Corrupt level in [0,1]")->default_val(ta.c);
  train->add_option("--lr", ta.lr, "Adam learning rate")->default_val(ta.lr);
  auto* ta_seed = train->add_option("--seed", ta.seed, "Random seed")->default_val(ta.seed);
  train->add_option("-o,--out", ta.out_dir, "Output directory")->required();

  ScoreArgs ca;
  auto* score = app.add_subcommand("score", "Score every row of a dataset with a trained model");
  auto* ca_cfg = add_config_option(score, ca.config);
  score->add_option("--model", ca.model, "Checkpoint file")->required();
  score->add_option("-i,--input", ca.input, "Labeled dataset file")->required();
  auto* lo_opt = score->add_option("--calib-lo", ca.calib_lo,
                                   "Frozen normalization minimum (with --calib-hi)");
  auto* hi_opt = score->add_option("--calib-hi", ca.calib_hi,
                                   "Frozen normalization maximum (with --calib-lo)");
  auto* ca_seed = score->add_option("--seed", ca.seed, "Seed echoed into outputs")
                      ->default_val(ca.seed);
  score->add_option("-o,--out", ca.out_dir, "Output directory")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model on the held-out split");
  auto* ea_cfg = add_config_option(eval, ea.config);
  eval->add_option("--model", ea.model, "Checkpoint file")->required();
  eval->add_option("-i,--input", ea.input, "Labeled dataset file")->required();
  eval->add_option("--normal-label", ea.normal_label, "Label of normal rows")
      ->default_val(ea.normal_label);
  eval->add_option("--test-fraction", ea.test_fraction, "Normal fraction held out for testing")
      ->default_val(ea.test_fraction);
  eval->add_option("--bins", ea.bins, "Histogram bins")->default_val(ea.bins);
  auto* ea_seed = eval->add_option("--seed", ea.seed, "Random seed (must match training)")
                      ->default_val(ea.seed);
  eval->add_option("-o,--out", ea.out_dir, "Output directory")->required();

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all four variants");
  auto* aa_cfg = add_config_option(ablate, aa.config);
  ablate->add_option("-i,--input", aa.input, "Labeled dataset file")->required();
  ablate->add_option("--normal-label", aa.normal_label, "Label of normal rows")
      ->default_val(aa.normal_label);
  ablate->add_option("--test-fraction", aa.test_fraction, "Normal fraction held out for testing")
      ->default_val(aa.test_fraction);
  ablate->add_option("--latent-dim", aa.latent_dim, "Latent vector length")
      ->default_val(aa.latent_dim);
  ablate->add_option("--epochs", aa.epochs, "Training epochs")->default_val(aa.epochs);
  ablate->add_option("--batch-size", aa.batch_size, "Mini-batch size")
      ->default_val(aa.batch_size);
  ablate->add_option("--lambda", aa.lambda, "Latent-error weight")->default_val(aa.lambda);
  ablate->add_option("--c", aa.c, "Corrupt level in [0,1]")->default_val(aa.c);
  ablate->add_option("--lr", aa.lr, "Adam learning rate")->default_val(aa.lr);
  ablate->add_option("--bins", aa.bins, "Histogram bins")->default_val(aa.bins);
  auto* aa_seed = ablate->add_option("--seed", aa.seed, "Base random seed")
                      ->default_val(aa.seed);
  ablate->add_option("-o,--out", aa.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "run '%s --help' for usage\n", argv[0]);
    return 1;
  }

  try {
    if (synth->parsed()) {
      apply_config_file(synth, sa_cfg, sa.config);
      sa.seed = resolve_seed(sa_seed, sa.seed);
      return run_synth(sa);
    }
    if (imitate->parsed()) {
      apply_config_file(imitate, ia_cfg, ia.config);
      ia.seed = resolve_seed(ia_seed, ia.seed);
      return run_imitate(*imitate, ia);
    }
    if (train->parsed()) {
      apply_config_file(train, ta_cfg, ta.config);
      ta.seed = resolve_seed(ta_seed, ta.seed);
      return run_train(*train, ta);
    }
    if (score->parsed()) {
      apply_config_file(score, ca_cfg, ca.config);
      ca.seed = resolve_seed(ca_seed, ca.seed);
      return run_score(*score, ca, lo_opt->count() > 0, hi_opt->count() > 0);
    }
    if (eval->parsed()) {
      apply_config_file(eval, ea_cfg, ea.config);
      ea.seed = resolve_seed(ea_seed, ea.seed);
      return run_eval(*eval, ea);
    }
    if (ablate->parsed()) {
      apply_config_file(ablate, aa_cfg, aa.config);
      aa.seed = resolve_seed(aa_seed, aa.seed);
      return run_ablate(*ablate, aa);
    }
  } catch (const UsageFailure& e) {
    std::fprintf(stderr, "%s\n", e.message.c_str());
    return 1;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const ran::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const ran::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
