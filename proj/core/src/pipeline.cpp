#include "rpnr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "rpnr/image_io.hpp"
#include "rpnr/random.hpp"
#include "rpnr/synth.hpp"
#include "strings.hpp"

namespace rpnr {

namespace fs = std::filesystem;
using nlohmann::json;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

// Runs `body`, rethrowing anything but a StageError as one for `stage`.
template <class F>
auto in_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

StageError::StageError(std::string stage, const std::string& message)
    : std::runtime_error(detail::cat(stage, ": ", message)), stage_(std::move(stage)) {}

ReshadeJob bundled_demo_job(int size) {
  const auto source = synth_scene(SceneKind::sphere, size, size,
                                  LightSpec::toward({-0.5, 0.5, 0.7}, 0.95), {0.85, 0.45, 0.3});
  const auto target = synth_scene(SceneKind::plane, size, size,
                                  LightSpec::toward({0.6, 0.1, 0.8}, 0.9), {0.35, 0.55, 0.75});
  ReshadeJob job;
  job.source = source.image;
  job.source_mask = source.object;
  job.target = target.image;
  job.placement = {size / 6, size / 5, 0.75};
  return job;
}

ReshadeJob load_job(const JobSection& section, int demo_size) {
  if (section.bundled()) return bundled_demo_job(demo_size);
  ReshadeJob job;
  job.source = load_image(section.source);
  job.source_mask = load_mask(section.mask);
  job.target = load_image(section.target);
  job.placement = section.placement;
  return job;
}

std::unique_ptr<NormalEstimator> make_configured_estimator(const PipelineConfig& config) {
  if (config.normals.backend == "synthetic") {
    return std::make_unique<GradientNormalEstimator>(config.normals.relief);
  }
  const auto paths = resolve_checkpoints(config.checkpoints);
  return make_normal_estimator(config.normals.backend, paths.normals);
}

DecompositionModel train_decomposition_stage(const PipelineConfig& config) {
  TrainConfig train = config.decomposition.train;
  train.seed = stage_seed(config, SeedStream::decomposition_train);
  if (!train.dataset_dir.empty()) return train_decomposition(train);
  std::vector<DecompositionSample> samples;
  samples.reserve(config.decomposition.samples);
  const auto seed = stage_seed(config, SeedStream::decomposition_data);
  for (int i = 0; i < config.decomposition.samples; ++i) {
    MondrianSpec m;
    m.height = m.width = config.image_size;
    m.seed = derive_seed(seed, 2 * i);
    PerlinSpec p;
    p.height = p.width = config.image_size;
    p.seed = derive_seed(seed, 2 * i + 1);
    samples.push_back(make_decomposition_sample(m, p));
  }
  return train_decomposition(samples, train);
}

namespace {

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError(detail::cat("no such directory ", dir.string()));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DatasetError(detail::cat("no PNG files in ", dir.string()));
  return files;
}

}  // namespace

DiscriminatorModel train_discriminator_stage(const PipelineConfig& config,
                                             const DecompositionModel* decomposition,
                                             const NormalEstimator* normals) {
  const auto& section = config.discriminator;
  TrainConfig train = section.train;
  train.seed = stage_seed(config, SeedStream::discriminator_train);
  const DiscriminatorOptions options{section.shading_only, section.cutmix_probability};
  const auto data_seed = stage_seed(config, SeedStream::discriminator_data);

  std::vector<DiscTrainSample> samples;
  if (!section.landscape_dir.empty()) {
    if (decomposition == nullptr || normals == nullptr) {
      throw std::invalid_argument("landscape shading needs a decomposition model and normals");
    }
    const auto files = png_files(section.landscape_dir);
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto photo = load_image(files[i]);
      auto shading = decomposition->decompose(photo).shading;
      auto n = normals->estimate(photo);
      samples.push_back(make_real_sample(n, shading));
      samples.push_back(make_fake_sample(n, distort_shading(shading, derive_seed(data_seed, i))));
    }
  } else if (!train.dataset_dir.empty()) {
    return train_discriminator(train, {}, options);
  } else {
    samples =
        make_discriminator_corpus(section.samples, config.image_size, config.image_size, data_seed);
  }
  return train_discriminator(samples, train, options);
}

FeatureExtractor finetune_features_stage(const PipelineConfig& config, const fs::path& pretrained) {
  const auto& section = config.features;
  IlluminationDataset data;
  if (!section.train.dataset_dir.empty()) {
    data = load_illumination_dataset(section.train.dataset_dir);
  } else {
    IlluminationCorpusSpec spec;
    spec.num_classes = section.classes;
    spec.scenes_per_class = section.scenes_per_class;
    spec.lights_per_scene = section.lights_per_scene;
    spec.height = spec.width = config.image_size;
    spec.seed = stage_seed(config, SeedStream::features_data);
    data = make_illumination_corpus(spec);
  }

  std::optional<FeatureExtractor> base;
  if (!pretrained.empty() && fs::exists(pretrained)) {
    base = FeatureExtractor::load(pretrained);
  } else {
    ClassifierArch arch;
    arch.num_classes = static_cast<int>(data.class_names.size());
    TrainConfig pre = section.pretrain;
    pre.seed = stage_seed(config, SeedStream::features_pretrain);
    base = pretrain_classifier(data.groups, pre, arch);
    if (!pretrained.empty()) base->save(pretrained);
  }
  TrainConfig train = section.train;
  train.seed = stage_seed(config, SeedStream::features_train);
  return finetune_features(*base, data.groups, train, section.consistency_weight);
}

AuxiliaryModels ModelBundle::view() const {
  AuxiliaryModels v;
  v.decomposition = decomposition ? &*decomposition : nullptr;
  v.discriminator = discriminator ? &*discriminator : nullptr;
  v.features = features ? &*features : nullptr;
  v.normals = normals.get();
  return v;
}

ModelBundle load_models(const PipelineConfig& config, bool train_missing) {
  ModelBundle bundle;
  bundle.paths = resolve_checkpoints(config.checkpoints);
  const auto& paths = bundle.paths;
  auto missing = [&](const std::string& stage, const fs::path& p) {
    return StageError(stage, detail::cat("checkpoint ", p.string(),
                                         " is missing (use --train-missing to train it)"));
  };

  bundle.normals = in_stage("normals", [&] { return make_configured_estimator(config); });

  in_stage("decomposition", [&] {
    if (fs::exists(paths.decomposition)) {
      bundle.decomposition = DecompositionModel::load(paths.decomposition);
    } else if (train_missing) {
      const auto start = clock_type::now();
      bundle.decomposition = train_decomposition_stage(config);
      bundle.decomposition->save(paths.decomposition);
      bundle.training_seconds["decomposition"] = seconds_since(start);
    } else {
      throw missing("decomposition", paths.decomposition);
    }
    return 0;
  });

  in_stage("discriminator", [&] {
    if (fs::exists(paths.discriminator)) {
      bundle.discriminator = DiscriminatorModel::load(paths.discriminator);
    } else if (train_missing) {
      const auto start = clock_type::now();
      bundle.discriminator =
          train_discriminator_stage(config, &*bundle.decomposition, bundle.normals.get());
      bundle.discriminator->save(paths.discriminator);
      bundle.training_seconds["discriminator"] = seconds_since(start);
    } else {
      throw missing("discriminator", paths.discriminator);
    }
    return 0;
  });

  in_stage("features", [&] {
    if (fs::exists(paths.features)) {
      bundle.features = FeatureExtractor::load(paths.features);
    } else if (train_missing) {
      const auto start = clock_type::now();
      bundle.features = finetune_features_stage(config, paths.features_pretrained);
      bundle.features->save(paths.features);
      bundle.training_seconds["features"] = seconds_since(start);
    } else {
      throw missing("features", paths.features);
    }
    return 0;
  });
  return bundle;
}

bool EndToEndResult::all_checks_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

double albedo_invariance_mse(const DecompositionModel& model, const PreparedState& state,
                             const Image& output) {
  const auto albedo = model.decompose(output).albedo;
  const auto m = state.mask.plane(0);
  double acc = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < 3; ++c) {
    const auto a = albedo.plane(c);
    const auto r = state.albedo_object.plane(c);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0.0f) continue;
      const double d = double(a[i]) - r[i];
      acc += d * d;
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

namespace {

bool equal_outside(const Raster& a, const Raster& b, const Mask& mask) {
  const auto m = mask.plane(0);
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0.0f && pa[i] != pb[i]) return false;
    }
  }
  return true;
}

bool in_unit_range(const Raster& r) {
  return std::all_of(r.values().begin(), r.values().end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

Image gray_preview(const Raster& field) {
  Image out(field.height(), field.width());
  for (int c = 0; c < 3; ++c) {
    std::copy(field.plane(0).begin(), field.plane(0).end(), out.plane(c).begin());
  }
  return out;
}

Image normals_preview(const NormalField& n) {
  Image out(n.height(), n.width());
  for (int c = 0; c < 3; ++c) {
    std::transform(n.plane(c).begin(), n.plane(c).end(), out.plane(c).begin(),
                   [](float v) { return std::clamp(0.5f * (v + 1.0f), 0.0f, 1.0f); });
  }
  return out;
}

// Block minima over consecutive windows; true when they never increase.
bool windowed_minima_non_increasing(const std::vector<LossRecord>& history, std::size_t window,
                                    std::string& detail_out) {
  std::vector<double> minima;
  for (std::size_t start = 0; start + window <= history.size(); start += window) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = start; i < start + window; ++i) m = std::min(m, history[i].total);
    minima.push_back(m);
  }
  std::ostringstream os;
  os << minima.size() << " windows of " << window;
  bool ok = true;
  for (std::size_t k = 1; k < minima.size(); ++k) {
    if (minima[k] > minima[k - 1]) {
      if (ok)
        os << "; first increase at window " << k << " (" << minima[k - 1] << " -> " << minima[k]
           << ")";
      ok = false;
    }
  }
  detail_out = os.str();
  return ok;
}

void write_loss_svg(const fs::path& path, const std::vector<LossRecord>& history) {
  constexpr double kW = 640, kH = 320, kPad = 40;
  struct Series {
    const char* name;
    const char* color;
    double LossRecord::* field;
  };
  const Series series[] = {{"total", "#000000", &LossRecord::total},
                           {"L_s", "#1f77b4", &LossRecord::shading},
                           {"L_n", "#d62728", &LossRecord::normal},
                           {"L_f", "#2ca02c", &LossRecord::feature}};
  auto lg = [](double v) { return std::log10(std::max(v, 1e-8)); };
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& r : history) {
    for (const auto& s : series) {
      lo = std::min(lo, lg(r.*s.field));
      hi = std::max(hi, lg(r.*s.field));
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double n = std::max<double>(1.0, static_cast<double>(history.size()) - 1.0);
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kPad << "\" y=\"20\" font-size=\"12\">log10 loss vs iteration (0.."
      << history.size() << "), range [" << std::setprecision(3) << lo << ", " << hi << "]</text>\n";
  const std::size_t stride = std::max<std::size_t>(1, history.size() / 600);
  int legend = 0;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << s.color << "\" points=\"";
    for (std::size_t i = 0; i < history.size(); i += stride) {
      const double x = kPad + (kW - 2 * kPad) * static_cast<double>(i) / n;
      const double y = kH - kPad - (kH - 2 * kPad) * (lg(history[i].*s.field) - lo) / (hi - lo);
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n<text x=\"" << kW - 90 << "\" y=\"" << 40 + 14 * legend++
        << "\" font-size=\"12\" fill=\"" << s.color << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

void write_report(const fs::path& dir, const ReshadeJob& job, const EndToEndResult& result,
                  const PipelineConfig& config) {
  const auto& s = result.state;
  const auto& r = result.reshade;
  fs::create_directories(dir / "report");
  save_image(dir / "report" / "source.png", job.source);
  save_mask(dir / "report" / "source_mask.png", job.source_mask);
  save_image(dir / "report" / "target.png", s.target);
  save_mask(dir / "report" / "placed_mask.png", s.mask);
  save_image(dir / "report" / "naive_C.png", s.naive);
  save_image(dir / "report" / "Y.png", r.output);
  save_image(dir / "report" / "S_star.png", gray_preview(r.generated_shading));
  save_image(dir / "report" / "S_T.png", gray_preview(s.shading_target));
  save_image(dir / "report" / "S_y.png", gray_preview(r.composite_shading));
  save_albedo(dir / "report" / "albedo_y.png", r.composite_albedo);
  save_image(dir / "report" / "N_y.png", normals_preview(s.normals_composite));
  write_loss_svg(dir / "report" / "loss_curve.svg", r.loss_history);

  std::ofstream md(dir / "report.md");
  md << "# Reshading report\n\n";
  md << "Job: " << (config.job.bundled() ? "bundled synthetic demo" : config.job.source.string())
     << ", placement dx=" << config.job.placement.dx << " dy=" << config.job.placement.dy
     << " scale=" << config.job.placement.scale << "\n\n";
  md << "| source | mask | target | naive cut-and-paste C | output Y |\n|---|---|---|---|---|\n";
  md << "| ![](report/source.png) | ![](report/source_mask.png) | ![](report/target.png) | "
        "![](report/naive_C.png) | ![](report/Y.png) |\n\n";
  md << "| S* | S_T | S_y | albedo ρ_y | normals N_y |\n|---|---|---|---|---|\n";
  md << "| ![](report/S_star.png) | ![](report/S_T.png) | ![](report/S_y.png) | "
        "![](report/albedo_y.png) | ![](report/N_y.png) |\n\n";
  md << "## Losses\n\n![](report/loss_curve.svg)\n\n";
  const auto& best = r.loss_history.at(r.best_iteration);
  md << std::setprecision(6) << "Best iteration " << r.best_iteration << " of "
     << r.loss_history.size() << ": L_s=" << best.shading << " L_n=" << best.normal
     << " L_f=" << best.feature << " total=" << best.total << "\n\n";
  md << "## Invariant checks\n\n| check | result | detail |\n|---|---|---|\n";
  for (const auto& c : result.checks) {
    md << "| " << c.name << " | " << (c.passed ? "pass" : "FAIL") << " | " << c.detail << " |\n";
  }
  md << "\n## Stage timings (s)\n\n";
  for (const auto& [stage, sec] : result.stage_seconds) md << "- " << stage << ": " << sec << "\n";
}

}  // namespace

EndToEndResult run_with_models(const PipelineConfig& config, const ModelBundle& models,
                               const RunOptions& options) {
  if (options.out_dir.empty()) throw StageError("reshade", "no output directory given");
  EndToEndResult result;
  const auto job = in_stage("inputs", [&] { return load_job(config.job, config.image_size); });
  result.state = in_stage("prepare", [&] { return prepare_job(job, models.view()); });

  std::size_t iterations_seen = 0;
  std::size_t surroundings_violations = 0;
  auto observer = [&](const LossRecord& rec, const ShadingField& s_star) {
    ++iterations_seen;
    const auto out = form_output(result.state, s_star);
    if (!equal_outside(out.output, result.state.target, result.state.mask)) {
      ++surroundings_violations;
    }
    if (options.observer) options.observer(rec, s_star);
  };
  const auto start = clock_type::now();
  result.reshade = in_stage(
      "reshade", [&] { return run_reshade(result.state, models.view(), config.dip, observer); });
  result.stage_seconds["reshade"] = seconds_since(start);
  for (const auto& [k, v] : models.training_seconds) result.stage_seconds["train " + k] = v;

  const auto& s = result.state;
  const auto& r = result.reshade;
  auto check = [&](std::string name, bool passed, std::string detail) {
    result.checks.push_back({std::move(name), passed, std::move(detail)});
  };
  check("surroundings untouched (final Y)", equal_outside(r.output, s.target, s.mask),
        "Y == T bit-exactly where M = 0");
  check("surroundings untouched (every iteration)", surroundings_violations == 0,
        detail::cat(iterations_seen, " iterations, ", surroundings_violations, " violations"));
  check("albedo composite",
        r.composite_albedo == cut_and_paste(s.albedo_object, s.albedo_target, s.mask),
        "ρ_y == CP(ρ_o, ρ_T, M)");
  check("shading composite",
        r.composite_shading == cut_and_paste(r.generated_shading, s.shading_target, s.mask),
        "S_y == CP(S*, S_T, M)");
  check("ranges", in_unit_range(r.generated_shading) && in_unit_range(r.output),
        "S* and Y within [0,1]");
  const bool finite = std::all_of(r.loss_history.begin(), r.loss_history.end(), [](const auto& l) {
    return std::isfinite(l.total) && l.shading >= 0 && l.normal >= 0 && l.feature >= 0;
  });
  check("losses finite and non-negative", finite,
        detail::cat(r.loss_history.size(), " iterations"));
  std::string window_detail;
  const bool windows = windowed_minima_non_increasing(r.loss_history, 50, window_detail);
  check("windowed loss minima non-increasing", windows, window_detail);
  if (models.decomposition) {
    const double mse = albedo_invariance_mse(*models.decomposition, s, r.output);
    check("albedo invariance", mse < kAlbedoInvarianceTolerance,
          detail::cat("decompose(Y) vs ρ_o inside M: MSE ", mse, " (limit ",
                      kAlbedoInvarianceTolerance, ")"));
  }

  in_stage("outputs", [&] {
    write_reshade_outputs(options.out_dir, r);
    write_report(options.out_dir, job, result, config);
    result.report = options.out_dir / "report.md";
    result.manifest = options.out_dir / "manifest.json";
    std::ofstream out(result.manifest);
    out << make_manifest(config, models.paths, result, options.out_dir).dump(2) << '\n';
    return 0;
  });
  return result;
}

EndToEndResult run_end_to_end(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  const auto models = load_models(config, options.train_missing);
  return run_with_models(config, models, options);
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(detail::cat("cannot read ", path.string()));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

json make_manifest(const PipelineConfig& config, const CheckpointPaths& paths,
                   const EndToEndResult& result, const fs::path& out_dir) {
  PipelineConfig pinned = config;
  pinned.checkpoints = {
      fs::absolute(paths.decomposition), fs::absolute(paths.discriminator),
      fs::absolute(paths.features), fs::absolute(paths.features_pretrained),
      config.normals.backend == "pretrained" ? fs::absolute(paths.normals) : fs::path()};
  for (auto* p : {&pinned.job.source, &pinned.job.mask, &pinned.job.target}) {
    if (!p->empty()) *p = fs::absolute(*p);
  }
  json m;
  m["config"] = to_json(pinned);
  m["seeds"] = {{"global", config.seed},
                {"decomposition_data", stage_seed(config, SeedStream::decomposition_data)},
                {"decomposition_train", stage_seed(config, SeedStream::decomposition_train)},
                {"discriminator_data", stage_seed(config, SeedStream::discriminator_data)},
                {"discriminator_train", stage_seed(config, SeedStream::discriminator_train)},
                {"features_data", stage_seed(config, SeedStream::features_data)},
                {"features_pretrain", stage_seed(config, SeedStream::features_pretrain)},
                {"features_train", stage_seed(config, SeedStream::features_train)},
                {"dip", config.dip.seed}};
  json ck = json::object();
  auto add = [&](const char* name, const fs::path& p) {
    if (!p.empty() && fs::exists(p)) ck[name] = {{"path", p.string()}, {"fnv1a64", file_digest(p)}};
  };
  add("decomposition", pinned.checkpoints.decomposition);
  add("discriminator", pinned.checkpoints.discriminator);
  add("features", pinned.checkpoints.features);
  add("normals", pinned.checkpoints.normals);
  m["checkpoints"] = ck;
  json outputs = json::object();
  for (const char* name : {"Y.png", "S_star.png16", "albedo_y.png", "shading_y.png16"}) {
    if (fs::exists(out_dir / name)) outputs[name] = file_digest(out_dir / name);
  }
  m["outputs"] = outputs;
  m["best_iteration"] = result.reshade.best_iteration;
  const auto& best = result.reshade.loss_history.at(result.reshade.best_iteration);
  m["best_losses"] = {
      {"L_s", best.shading}, {"L_n", best.normal}, {"L_f", best.feature}, {"total", best.total}};
  m["checks_passed"] = result.all_checks_passed();
  return m;
}

PipelineConfig config_from_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw StageError("manifest", detail::cat("cannot open ", manifest.string()));
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw StageError("manifest", e.what());
  }
  if (!m.contains("config")) throw StageError("manifest", "no 'config' entry");
  auto config = config_from_json(m.at("config"));
  const json checkpoints = m.value("checkpoints", json::object());
  for (const auto& [name, entry] : checkpoints.items()) {
    const fs::path p = entry.at("path").get<std::string>();
    if (!fs::exists(p) || file_digest(p) != entry.at("fnv1a64").get<std::string>()) {
      throw StageError("manifest", detail::cat("checkpoint '", name, "' at ", p.string(),
                                               " is missing or differs from the recorded run"));
    }
  }
  return config;
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == "ok"; });
}

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << std::left << std::setw(9) << c.status << std::setw(16) << c.name << c.path.string();
    if (!c.detail.empty()) os << "  (" << c.detail << ")";
    os << '\n';
  }
  os << (ok() ? "all artifacts valid" : "validation failed") << '\n';
  return os.str();
}

namespace {

template <class F>
void check_artifact(ValidationReport& report, const std::string& name, const fs::path& path,
                    F&& smoke) {
  ArtifactCheck c{name, path, "ok", ""};
  if (path.empty() || !fs::exists(path)) {
    c.status = "missing";
  } else {
    try {
      c.detail = smoke();
    } catch (const CheckpointError& e) {
      c.status = "corrupt";
      c.detail = e.what();
    } catch (const EstimatorError& e) {
      c.status = "corrupt";
      c.detail = e.what();
    } catch (const std::exception& e) {
      c.status = "failed";
      c.detail = e.what();
    }
  }
  report.checks.push_back(std::move(c));
}

Image smoke_image(int size) {
  Image img(size, size);
  Rng rng(7);
  for (float& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

void require(bool condition, const char* what) {
  if (!condition) throw std::runtime_error(what);
}

}  // namespace

ValidationReport validate_artifacts(const PipelineConfig& config) {
  ValidationReport report;
  const auto paths = resolve_checkpoints(config.checkpoints);
  const auto img = smoke_image(config.image_size);

  check_artifact(report, "decomposition", paths.decomposition, [&] {
    const auto model = DecompositionModel::load(paths.decomposition);
    const auto d = model.decompose(img);
    require(d.albedo.same_extent(img) && d.shading.same_extent(img), "output shape mismatch");
    check_unit_range(d.albedo, "albedo");
    check_unit_range(d.shading, "shading");
    return std::string("smoke inference ok");
  });
  check_artifact(report, "discriminator", paths.discriminator, [&] {
    const auto model = DiscriminatorModel::load(paths.discriminator);
    const auto s = model.score(flat_normals(img.height(), img.width()),
                               ShadingField(img.height(), img.width(), 0.5f));
    require(s.global >= 0.0 && s.global <= 1.0, "global score outside [0,1]");
    check_unit_range(s.map, "realness map");
    return std::string("smoke inference ok");
  });
  check_artifact(report, "features", paths.features, [&] {
    const auto model = FeatureExtractor::load(paths.features);
    const auto f = model.extract(img);
    require(static_cast<int>(f.size()) == model.feature_dim(), "feature dimension mismatch");
    return detail::cat("feature dim ", f.size());
  });
  if (config.normals.backend == "synthetic") {
    report.checks.push_back({"normals", {}, "ok", "synthetic backend needs no checkpoint"});
  } else {
    check_artifact(report, "normals", paths.normals, [&] {
      const auto est = make_normal_estimator("pretrained", paths.normals);
      check_unit_normals(est->estimate(img));
      return std::string("smoke inference ok");
    });
  }

  auto dataset = [&](const std::string& name, const fs::path& dir, auto&& loader) {
    if (dir.empty()) return;
    ArtifactCheck c{name, dir, "ok", ""};
    try {
      c.detail = loader();
    } catch (const std::exception& e) {
      c.status = fs::exists(dir) ? "failed" : "missing";
      c.detail = e.what();
    }
    report.checks.push_back(std::move(c));
  };
  dataset("decomposition data", config.decomposition.train.dataset_dir, [&] {
    return detail::cat(load_decomposition_dataset(config.decomposition.train.dataset_dir).size(),
                       " samples");
  });
  dataset("distortion data", config.discriminator.train.dataset_dir, [&] {
    return detail::cat(load_distortion_dataset(config.discriminator.train.dataset_dir).size(),
                       " samples");
  });
  dataset("illumination data", config.features.train.dataset_dir, [&] {
    return detail::cat(load_illumination_dataset(config.features.train.dataset_dir).groups.size(),
                       " groups");
  });
  return report;
}

}  // namespace rpnr
