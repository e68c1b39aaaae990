// rpnr command-line front end. Exit codes: 0 success, 1 usage error,
// 2 stage failure, 3 validation failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rpnr/config.hpp"
#include "rpnr/decomposition.hpp"
#include "rpnr/dip.hpp"
#include "rpnr/discriminator.hpp"
#include "rpnr/features.hpp"
#include "rpnr/image_io.hpp"
#include "rpnr/normals.hpp"
#include "rpnr/pipeline.hpp"
#include "rpnr/synth.hpp"

namespace fs = std::filesystem;
using namespace rpnr;

namespace {

constexpr int kUsage = 1;
constexpr int kStageFailure = 2;
constexpr int kValidationFailure = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

struct GenData {
  std::string kind = "decomposition";
  DatasetSpec spec;
  int scenes_per_class = 24;
  int lights = 4;
  int classes = 4;
};

int gen_data(const GenData& g) {
  if (g.kind == "decomposition") {
    write_decomposition_dataset(g.spec);
  } else if (g.kind == "distortion") {
    write_distortion_dataset(g.spec);
  } else if (g.kind == "illumination") {
    IlluminationCorpusSpec s;
    s.num_classes = g.classes;
    s.scenes_per_class = g.scenes_per_class;
    s.lights_per_scene = g.lights;
    s.height = g.spec.height;
    s.width = g.spec.width;
    s.seed = g.spec.seed;
    write_illumination_dataset(g.spec.out_dir, make_illumination_corpus(s));
  } else {
    throw UsageError("--kind must be decomposition, distortion or illumination");
  }
  std::cout << "wrote " << g.kind << " data to " << g.spec.out_dir.string() << "\n";
  return 0;
}

void print_checks(const EndToEndResult& r) {
  for (const auto& c : r.checks) {
    std::cout << (c.passed ? "  pass  " : "  FAIL  ") << c.name << ": " << c.detail << "\n";
  }
  std::cout << "report:   " << r.report.string() << "\nmanifest: " << r.manifest.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object reshading with a deep image prior"};
  app.require_subcommand(1);
  std::string config_path;

  // gen-data
  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic training corpus");
  gen_cmd->add_option("--kind", gen.kind, "decomposition | distortion | illumination")
      ->capture_default_str();
  gen_cmd->add_option("--count", gen.spec.count, "Number of samples")->capture_default_str();
  std::string gen_out;
  gen_cmd->add_option("--out-dir", gen_out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.spec.seed)->capture_default_str();
  gen_cmd->add_option("--height", gen.spec.height)->capture_default_str();
  gen_cmd->add_option("--width", gen.spec.width)->capture_default_str();
  gen_cmd->add_option("--n-patches", gen.spec.n_patches)->capture_default_str();
  gen_cmd->add_option("--perlin-freq", gen.spec.perlin_frequency)->capture_default_str();
  gen_cmd->add_option("--scenes-per-class", gen.scenes_per_class, "illumination only");
  gen_cmd->add_option("--lights", gen.lights, "illumination only");
  gen_cmd->add_option("--classes", gen.classes, "illumination only");

  // train-decomposition
  std::string train_out, train_data;
  auto* td_cmd = app.add_subcommand("train-decomposition", "Train the albedo-shading network");
  td_cmd->add_option("--config", config_path, "Pipeline config (JSON)");
  td_cmd->add_option("--data", train_data, "Decomposition dataset (overrides config)");
  td_cmd->add_option("--out", train_out, "Checkpoint path")->required();

  // decompose
  std::string ckpt, image_path, out_albedo, out_shading;
  auto* dec_cmd = app.add_subcommand("decompose", "Split an image into albedo and shading");
  dec_cmd->add_option("--ckpt", ckpt)->required();
  dec_cmd->add_option("--image", image_path)->required();
  dec_cmd->add_option("--out-albedo", out_albedo)->required();
  dec_cmd->add_option("--out-shading", out_shading)->required();

  // train-discriminator
  bool shading_only = false;
  std::optional<double> cutmix;
  auto* tdis_cmd =
      app.add_subcommand("train-discriminator", "Train the normal-shading discriminator");
  tdis_cmd->add_option("--config", config_path);
  tdis_cmd->add_option("--data", train_data, "Distortion dataset (clean/distorted/masks/normals)");
  tdis_cmd->add_option("--out", train_out)->required();
  tdis_cmd->add_flag("--shading-only", shading_only, "Zero the normal channels");
  tdis_cmd->add_option("--cutmix", cutmix, "CutMix probability");

  // finetune-features
  std::string pretrained;
  std::optional<double> lambda_c;
  auto* ff_cmd =
      app.add_subcommand("finetune-features", "Fine-tune the illumination-robust features");
  ff_cmd->add_option("--config", config_path);
  ff_cmd->add_option("--data", train_data, "root/<class>/<scene>/<lighting>.png");
  ff_cmd->add_option("--out", train_out)->required();
  ff_cmd->add_option("--pretrained", pretrained,
                     "Pretrained classifier (trained and saved here if absent)");
  ff_cmd->add_option("--lambda", lambda_c, "Consistency weight");

  // estimate-normals
  std::string backend = "synthetic", normals_out;
  auto* en_cmd = app.add_subcommand("estimate-normals", "Estimate a normal field");
  en_cmd->add_option("--backend", backend, "pretrained | synthetic")->capture_default_str();
  en_cmd->add_option("--ckpt", ckpt, "TorchScript model for the pretrained backend");
  en_cmd->add_option("--image", image_path)->required();
  en_cmd->add_option("--out", normals_out)->required();

  // reshade
  std::string source, mask, target, out_dir, manifest;
  Placement placement;
  bool train_missing = false;
  std::optional<int> iterations, noise_batch;
  auto* rs_cmd = app.add_subcommand("reshade", "Reshade a pasted object");
  rs_cmd->add_option("--source", source);
  rs_cmd->add_option("--mask", mask);
  rs_cmd->add_option("--target", target);
  rs_cmd->add_option("--dx", placement.dx)->capture_default_str();
  rs_cmd->add_option("--dy", placement.dy)->capture_default_str();
  rs_cmd->add_option("--scale", placement.scale)->capture_default_str();
  rs_cmd->add_option("--config", config_path);
  rs_cmd->add_option("--manifest", manifest, "Re-run exactly the job recorded in a manifest");
  rs_cmd->add_option("--out-dir", out_dir)->required();
  rs_cmd->add_flag("--train-missing", train_missing, "Train absent checkpoints first");
  rs_cmd->add_option("--iterations", iterations);
  rs_cmd->add_option("--noise-batch", noise_batch);

  // benchmark-dip
  std::vector<int> batches{1, 2, 4};
  double seconds = 20.0;
  std::string csv_out;
  auto* bd_cmd = app.add_subcommand("benchmark-dip", "Compare noise batch sizes");
  bd_cmd->add_option("--config", config_path);
  bd_cmd->add_option("--batches", batches)->delimiter(',')->capture_default_str();
  bd_cmd->add_option("--seconds", seconds, "Wall-clock budget per batch size")
      ->capture_default_str();
  bd_cmd->add_option("--csv", csv_out);
  bd_cmd->add_flag("--train-missing", train_missing);

  // validate
  auto* va_cmd = app.add_subcommand("validate", "Check checkpoints and datasets");
  va_cmd->add_option("--config", config_path);

  // demo
  auto* demo_cmd = app.add_subcommand("demo", "Bundled synthetic end-to-end run");
  demo_cmd->add_option("--config", config_path);
  demo_cmd->add_option("--manifest", manifest);
  demo_cmd->add_option("--out-dir", out_dir)->required();
  demo_cmd->add_option("--iterations", iterations);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.spec.out_dir = gen_out;
      return gen_data(gen);
    }
    if (td_cmd->parsed()) {
      auto config = config_or_default(config_path);
      if (!train_data.empty()) config.decomposition.train.dataset_dir = train_data;
      auto model = train_decomposition_stage(config);
      model.save(train_out);
      std::cout << "final train loss " << model.log().train_loss.back() << ", validation "
                << model.log().validation_loss.back() << "\nsaved " << train_out << "\n";
      return 0;
    }
    if (dec_cmd->parsed()) {
      const auto model = DecompositionModel::load(ckpt);
      const auto d = model.decompose(load_image(image_path));
      save_albedo(out_albedo, d.albedo);
      save_shading16(out_shading, d.shading);
      return 0;
    }
    if (tdis_cmd->parsed()) {
      auto config = config_or_default(config_path);
      if (!train_data.empty()) config.discriminator.train.dataset_dir = train_data;
      if (shading_only) config.discriminator.shading_only = true;
      if (cutmix) config.discriminator.cutmix_probability = *cutmix;
      config.validate();
      auto model = train_discriminator_stage(config);
      model.save(train_out);
      std::cout << "final L_enc " << model.log().enc.back() << ", L_dec " << model.log().dec.back()
                << "\nsaved " << train_out << "\n";
      return 0;
    }
    if (ff_cmd->parsed()) {
      auto config = config_or_default(config_path);
      if (!train_data.empty()) config.features.train.dataset_dir = train_data;
      if (lambda_c) config.features.consistency_weight = *lambda_c;
      config.validate();
      auto model = finetune_features_stage(config, pretrained);
      model.save(train_out);
      std::cout << "final classification " << model.log().classification.back() << ", consistency "
                << model.log().consistency.back() << "\nsaved " << train_out << "\n";
      return 0;
    }
    if (en_cmd->parsed()) {
      const auto est = make_normal_estimator(backend, ckpt);
      save_normals16(normals_out, est->estimate(load_image(image_path)));
      return 0;
    }
    if (rs_cmd->parsed() || demo_cmd->parsed()) {
      PipelineConfig config;
      if (!manifest.empty()) {
        config = config_from_manifest(manifest);
      } else {
        config = config_or_default(config_path);
        if (demo_cmd->parsed()) {
          if (config_path.empty()) config.normals.backend = "synthetic";
          config.job = {};
          train_missing = true;
        } else if (!source.empty() || !mask.empty() || !target.empty()) {
          config.job = {source, mask, target, placement};
        }
        if (rs_cmd->parsed() && config.job.bundled()) {
          throw UsageError("reshade needs --source, --mask and --target (or a config job)");
        }
      }
      if (iterations) config.dip.iterations = *iterations;
      if (noise_batch) config.dip.noise_batch = *noise_batch;
      config.validate();
      RunOptions options;
      options.out_dir = out_dir;
      options.train_missing = train_missing;
      const auto result = run_end_to_end(config, options);
      print_checks(result);
      return 0;
    }
    if (bd_cmd->parsed()) {
      auto config = config_or_default(config_path);
      const auto models = load_models(config, train_missing);
      const auto state = prepare_job(load_job(config.job, config.image_size), models.view());
      const auto rows = benchmark_batched_noise(state, models.view(), config.dip, batches, seconds);
      std::ostringstream table;
      table << "B,iterations,seconds,iterations_per_second,initial_loss,best_loss,"
               "loss_decrease_per_second,rate_vs_B1\n";
      for (const auto& r : rows) {
        table << r.batch << ',' << r.iterations << ',' << r.seconds << ','
              << r.iterations_per_second << ',' << r.initial_loss << ',' << r.best_loss << ','
              << r.loss_decrease_per_second << ',' << relative_progress_rate(r, rows.front())
              << '\n';
      }
      std::cout << table.str() << "(reference figure for B=4: >= 4x)\n";
      if (!csv_out.empty()) std::ofstream(csv_out) << table.str();
      return 0;
    }
    if (va_cmd->parsed()) {
      const auto report = validate_artifacts(config_or_default(config_path));
      std::cout << report.to_text();
      return report.ok() ? 0 : kValidationFailure;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << "\n";
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kStageFailure;
  }
  return kUsage;
}
