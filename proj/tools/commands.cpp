#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "fimfuse/checkpoint.hpp"
#include "fimfuse/embedstore.hpp"
#include "fimfuse/errors.hpp"
#include "fimfuse/evaluate.hpp"
#include "fimfuse/interpret.hpp"
#include "fimfuse/trainer.hpp"

namespace fimfuse::cli {

namespace {

namespace es = fimfuse::embedstore;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string precision = "f64";
};

std::uint64_t resolve_seed(const GlobalOptions& g) {
  if (g.seed) return *g.seed;
  const char* ci = std::getenv("CI");
  if (ci != nullptr && *ci != '\0') throw ConfigError("--seed is required when CI is set");
  return kDefaultSeed;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write failed on '" + path + "'");
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void print_manifest(std::ostream& out, const es::DatasetManifest& m) {
  out << "format_version: " << m.format_version << "\n"
      << "d_img: " << m.d_img << "\n"
      << "d_txt: " << m.d_txt << "\n"
      << "records: train=" << m.count(es::Split::Train) << " dev=" << m.count(es::Split::Dev)
      << " test=" << m.count(es::Split::Test) << "\n"
      << "tasks:";
  for (const auto& t : m.tasks) out << " " << t.name << "(" << to_string(t.kind) << ", " << t.num_classes << ")";
  out << "\n";
  if (!m.metadata.empty()) out << "metadata: " << m.metadata.dump() << "\n";
}

void check_checkpoint_matches(const ModelConfig& cfg, const es::DatasetManifest& m) {
  if (cfg.d_img != m.d_img || cfg.d_txt != m.d_txt)
    throw DimensionError("checkpoint expects (d_img, d_txt) = (" + std::to_string(cfg.d_img) +
                         ", " + std::to_string(cfg.d_txt) + "), dataset has (" +
                         std::to_string(m.d_img) + ", " + std::to_string(m.d_txt) + ")");
  if (cfg.tasks != m.tasks) throw ConfigError("checkpoint task schema differs from the dataset's");
}

template <class Fn>
auto with_precision(const GlobalOptions& g, Fn&& fn) {
  if (g.precision == "f32") return fn(float{});
  if (g.precision == "f64") return fn(double{});
  throw ConfigError("--precision must be f32 or f64");
}

// synth ----------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  es::SyntheticSpec spec;
};

int cmd_synth(const SynthArgs& a, const GlobalOptions& g, std::ostream& out) {
  auto spec = a.spec;
  spec.seed = resolve_seed(g);
  const auto ds = es::generate_synthetic(spec);
  es::write_dataset(ds.records, ds.manifest, a.out);
  out << "wrote " << a.out << "\n";
  print_manifest(out, ds.manifest);
  return kExitOk;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string history;
};

int cmd_train(const TrainArgs& a, const GlobalOptions& g, std::ostream& out) {
  nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : cfg.items())
    if (key != "model" && key != "train")
      throw ConfigError("unknown config key '" + key + "' (expected \"model\" and \"train\")");
  const nlohmann::json model_json = cfg.value("model", nlohmann::json::object());
  const nlohmann::json train_json = cfg.value("train", nlohmann::json::object());
  ModelConfig model = model_config_from_json(model_json);
  train::TrainConfig tc = train::train_config_from_json(train_json);
  if (g.seed || !train_json.contains("seed")) tc.seed = resolve_seed(g);

  const auto ds = es::read_dataset(a.data);
  if (!model_json.contains("d_img")) model.d_img = ds.manifest.d_img;
  if (!model_json.contains("d_txt")) model.d_txt = ds.manifest.d_txt;
  if (!model_json.contains("task_schema")) model.tasks = ds.manifest.tasks;
  model.validate();
  tc.validate();

  out << "model: " << model_config_to_json(model).dump() << "\n"
      << "parameters: " << parameter_count(model) << "\n"
      << "epoch  train_loss    " << to_string(tc.select_metric) << "   seconds\n";

  train::FitOptions opts;
  opts.threads = g.threads;
  opts.on_epoch = [&](const train::EpochRecord& e) {
    char line[128];
    std::snprintf(line, sizeof line, "%5d  %10.6f  %10.4f  %8.2f\n", e.epoch, e.train_loss,
                  e.dev_metric, e.wall_seconds);
    out << line << std::flush;
  };

  const auto history = with_precision(g, [&](auto tag) {
    using Real = decltype(tag);
    auto result = train::fit<Real>(ds, model, tc, opts);
    const nlohmann::json metadata = {{"train", train::train_config_to_json(tc)},
                                     {"precision", g.precision},
                                     {"best_epoch", result.history.best_epoch},
                                     {"best_metric", result.history.best_metric}};
    save_checkpoint(a.out, result.best_params, metadata);
    return result.history;
  });

  const std::string history_path = a.history.empty() ? a.out + ".history.json" : a.history;
  write_text(history_path, history.to_json().dump(2) + "\n");
  write_text(history_path + ".tsv", history.loss_curve_tsv());
  out << "best epoch " << history.best_epoch << " (" << to_string(tc.select_metric) << " "
      << history.best_metric << ")\n"
      << "wrote " << a.out << ", " << history_path << "\n";
  return kExitOk;
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string out;
};

int cmd_eval(const EvalArgs& a, const GlobalOptions& g, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto ds = es::read_dataset(a.data);
  check_checkpoint_matches(ckpt.config, ds.manifest);
  const auto split = es::split_from_string(a.split);
  if (ds.manifest.count(split) == 0)
    throw ConfigError("split '" + a.split + "' has no records in " + a.data);

  const auto report = with_precision(g, [&](auto tag) {
    using Real = decltype(tag);
    return train::evaluate(ds, split, ckpt.params<Real>(), g.threads);
  });
  out << report.to_table();
  const std::string json = report.to_json().dump(2) + "\n";
  if (a.out.empty())
    out << json;
  else
    write_text(a.out, json);
  return kExitOk;
}

// interpret ------------------------------------------------------------------

struct InterpretArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string split = "train";
  int k = 15;
  int max_iter = 300;
};

int cmd_interpret(const InterpretArgs& a, const GlobalOptions& g, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.config.fusion_mode != FusionMode::Cross)
    throw ModeError("interpretation needs a cross-fusion checkpoint; '" + a.checkpoint +
                    "' uses " + std::string(to_string(ckpt.config.fusion_mode)) +
                    " fusion, which has no interaction matrix");
  const auto ds = es::read_dataset(a.data);
  check_checkpoint_matches(ckpt.config, ds.manifest);

  interpret::PipelineOptions opts;
  opts.k = a.k;
  opts.seed = resolve_seed(g);
  opts.max_iter = a.max_iter;
  opts.split = es::split_from_string(a.split);
  opts.threads = g.threads;
  const auto result = with_precision(g, [&](auto tag) {
    using Real = decltype(tag);
    return interpret::run_pipeline(ds, ckpt.params<Real>(), ckpt.crc, opts);
  });
  write_text(a.out, result.report.to_json().dump(2) + "\n");

  out << "hateful records: " << result.triggers.size() << "\n"
      << "gradient cells selected: " << result.gradient_bits.popcount() << " of "
      << result.gradient_bits.bits.size() << (result.gradient_bits.degenerate ? " (degenerate)" : "")
      << "\n"
      << "k-means: " << result.clustering.iterations << " iterations, inertia "
      << result.clustering.inertia << (result.clustering.converged ? "" : " (not converged)") << "\n";
  for (const auto& c : result.report.clusters)
    out << "cluster " << c.cluster_id << ": " << c.member_ids.size() << " members"
        << (c.ambiguous ? " [ambiguous]" : "") << "\n";
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

// inspect --------------------------------------------------------------------

int cmd_inspect(const std::string& path, std::ostream& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[4] = {};
  f.read(magic, 4);
  if (f.gcount() != 4) throw ConfigError("'" + path + "' is too short to identify");
  f.close();

  if (std::equal(magic, magic + 4, es::kMagic.begin())) {
    const auto ds = es::read_dataset(path);
    out << "embedding dataset\n";
    print_manifest(out, ds.manifest);
    return kExitOk;
  }
  if (std::equal(magic, magic + 4, kCheckpointMagic.begin())) {
    const auto ckpt = load_checkpoint(path);
    const auto expected = parameter_count(ckpt.config);
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", ckpt.crc);
    out << "checkpoint\n"
        << "crc32: " << crc << "\n"
        << "model: " << model_config_to_json(ckpt.config).dump() << "\n"
        << "metadata: " << ckpt.metadata.dump() << "\n"
        << "stored parameters: " << ckpt.values.size() << "\n"
        << "parameter_count(config): " << expected << "\n";
    if (ckpt.values.size() != expected) throw CorruptionError("parameter count mismatch", 0);
    return kExitOk;
  }
  throw ConfigError("'" + path + "' has unknown magic (expected FIMF or FIMM)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-interaction fusion heads over precomputed image/text embeddings"};
  app.name("fimfuse");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every random stream");
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_option("--precision", g.precision, "Compute precision")->check(CLI::IsMember({"f32", "f64"}));

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic bilinear-label dataset");
  synth_cmd->add_option("--out", synth.out, "Output embedding file")->required();
  synth_cmd->add_option("--latent-dim", synth.spec.latent_dim, "Latent dimension k");
  synth_cmd->add_option("--d-img", synth.spec.d_img, "Image embedding width");
  synth_cmd->add_option("--d-txt", synth.spec.d_txt, "Text embedding width");
  synth_cmd->add_option("--train", synth.spec.num_train, "Train records");
  synth_cmd->add_option("--dev", synth.spec.num_dev, "Dev records");
  synth_cmd->add_option("--test", synth.spec.num_test, "Test records");
  synth_cmd->add_option("--noise", synth.spec.noise_sigma, "Label noise sigma");
  synth_cmd->add_option("--aux-classes", synth.spec.aux_classes, "Classes of the auxiliary multilabel task");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a fusion head and keep the best dev epoch");
  train_cmd->add_option("--data", train_args.data, "Embedding file")->required();
  train_cmd->add_option("--config", train_args.config, "JSON config with \"model\" and \"train\" objects");
  train_cmd->add_option("--out", train_args.out, "Checkpoint output")->required();
  train_cmd->add_option("--history", train_args.history, "History JSON (default <out>.history.json)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--data", eval_args.data, "Embedding file")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_args.split, "train, dev or test");
  eval_cmd->add_option("--out", eval_args.out, "Write the JSON report here instead of stdout");

  InterpretArgs interp;
  auto* interp_cmd = app.add_subcommand("interpret", "Cluster trigger vectors of hateful records");
  interp_cmd->add_option("--data", interp.data, "Embedding file")->required();
  interp_cmd->add_option("--checkpoint", interp.checkpoint, "Cross-fusion checkpoint")->required();
  interp_cmd->add_option("--out", interp.out, "Cluster report JSON")->required();
  interp_cmd->add_option("--k", interp.k, "Number of clusters")->check(CLI::PositiveNumber);
  interp_cmd->add_option("--split", interp.split, "Split whose hateful records are clustered");
  interp_cmd->add_option("--max-iter", interp.max_iter, "Lloyd iteration cap");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Describe a dataset or checkpoint file");
  inspect_cmd->add_option("path", inspect_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (*synth_cmd) return cmd_synth(synth, g, out);
    if (*train_cmd) return cmd_train(train_args, g, out);
    if (*eval_cmd) return cmd_eval(eval_args, g, out);
    if (*interp_cmd) return cmd_interpret(interp, g, out);
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UndefinedMetricError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}

}  // namespace fimfuse::cli
