// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
//
//   rpnr_acceptance [--work-dir DIR] [--reuse] [--known-red 6,...]
//
// Models are trained once with the demo configuration into DIR/cache and
// shared by every criterion. --reuse keeps an existing cache (training times
// are then read back from DIR/training_seconds.json). Criteria listed in
// --known-red still print FAIL but do not change the exit status.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rpnr/config.hpp"
#include "rpnr/image_io.hpp"
#include "rpnr/metrics.hpp"
#include "rpnr/pipeline.hpp"
#include "rpnr/random.hpp"

namespace fs = std::filesystem;
using namespace rpnr;

namespace {

// ---- pinned tolerances ------------------------------------------------------
constexpr double kRoundTripTolerance = 1e-6;
constexpr double kReconstructionLimit = 0.01;
constexpr double kIdempotenceLimit = 0.02;
constexpr double kAucLimit = 0.9;
constexpr double kIouLimit = 0.3;
constexpr double kAccuracyDropLimit = 0.10;
constexpr double kBatchSpeedupLimit = 1.5;
constexpr double kReferenceSpeedup = 4.0;
constexpr double kInpaintingLimit = 1e-3;
constexpr int kInpaintingIterations = 2000;
constexpr double kGradientLimit = 1e-3;
constexpr double kFiniteDifferenceStep = 1e-6;

constexpr double kOneMinute = 60.0;
constexpr double kTrainingBudget = 15 * 60.0;
constexpr double kTenMinutes = 10 * 60.0;
constexpr double kDemoBudget = 30 * 60.0;
constexpr double kBenchmarkSecondsPerRow = 20.0;

constexpr int kMinDecompositionSamples = 2000;
constexpr int kMinDiscriminatorSamples = 1000;
constexpr int kMinDiscriminatorEpochs = 20;
constexpr int kHeldOutDecomposition = 200;
constexpr int kHeldOutDiscriminator = 400;
constexpr int kHeldOutScenesPerClass = 12;

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t) {
  return std::chrono::duration<double>(clock_type::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(std::set<int> known_red) : known_red_(std::move(known_red)) {}

  void run(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = clock_type::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double sec = since(start);
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << id << "  " << name
         << "  [" << o.detail << "] (" << std::fixed << std::setprecision(1) << sec << " s)";
    if (!o.pass && known_red_.count(id)) line << "  (known red, see README)";
    std::cout << line.str() << std::endl;
    if (!o.pass && !known_red_.count(id)) ++unexpected_failures_;
  }

  int unexpected_failures() const { return unexpected_failures_; }

 private:
  std::set<int> known_red_;
  int unexpected_failures_ = 0;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

void note(const std::string& text) { std::cout << "      " << text << std::endl; }

Raster random_raster(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Raster r(h, w, c);
  for (float& v : r.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return r;
}

Mask random_mask(int h, int w, Rng& rng) {
  Mask m(h, w);
  for (float& v : m.values()) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
  return m;
}

// ---- criterion 1 ------------------------------------------------------------
Outcome compositing_algebra() {
  Rng rng(2024);
  std::size_t violations = 0;
  double worst_round_trip = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const Image a(random_raster(64, 64, 3, rng));
    const Image b(random_raster(64, 64, 3, rng));
    const Mask m = random_mask(64, 64, rng);
    const Image ab = cut_and_paste(a, b, m);
    const Image ba = cut_and_paste(b, a, m);
    const Image aa = cut_and_paste(a, a, m);
    const Image xo = extract_object(a, m);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const float mi = m.values()[i % m.plane_size()];
      if (ab.values()[i] + ba.values()[i] != a.values()[i] + b.values()[i]) ++violations;
      if (aa.values()[i] != a.values()[i]) ++violations;
      if (xo.values()[i] != mi * a.values()[i]) ++violations;
    }
    const AlbedoField rho(random_raster(64, 64, 3, rng));
    const ShadingField s(random_raster(64, 64, 1, rng, 0.1, 1.0));
    const AlbedoField back = recover_albedo(form_image(rho, s), s);
    for (std::size_t i = 0; i < rho.size(); ++i) {
      worst_round_trip =
          std::max(worst_round_trip, std::abs(double(back.values()[i]) - rho.values()[i]));
    }
  }
  return {violations == 0 && worst_round_trip <= kRoundTripTolerance,
          fmt(trials, 4) + " random 64x64 triples, exact-identity violations " +
              std::to_string(violations) + ", round-trip max error " + fmt(worst_round_trip) +
              " (limit " + fmt(kRoundTripTolerance) + ")"};
}

// ---- criterion 8 ------------------------------------------------------------
Outcome gradient_check() {
  Rng rng(88);
  const int n = 8;
  const Mask mask = random_mask(n, n, rng);
  const AlbedoField rho_o = extract_object(AlbedoField(random_raster(n, n, 3, rng)), mask);
  const ShadingField s_t(random_raster(n, n, 1, rng));
  const auto state = make_prepared_state(
      Image(random_raster(n, n, 3, rng)), Image(random_raster(n, n, 3, rng)), mask, rho_o,
      AlbedoField(random_raster(n, n, 3, rng)), s_t, flat_normals(n, n));
  DIPConfig cfg;
  cfg.weights = {1.0, 0.0, 0.0};
  torch::manual_seed(8);
  const auto raw0 = torch::rand({1, 1, n, n}, torch::kDouble) * 0.8 + 0.1;
  auto raw = raw0.clone().requires_grad_(true);
  compute_losses(state, {}, cfg, raw).shading.sum().backward();
  const auto analytic = raw.grad();

  auto fd = torch::zeros_like(raw0);
  for (int64_t i = 0; i < raw0.numel(); ++i) {
    auto plus = raw0.clone();
    auto minus = raw0.clone();
    plus.view({-1})[i] += kFiniteDifferenceStep;
    minus.view({-1})[i] -= kFiniteDifferenceStep;
    const double lp = compute_losses(state, {}, cfg, plus).shading.item<double>();
    const double lm = compute_losses(state, {}, cfg, minus).shading.item<double>();
    fd.view({-1})[i] = (lp - lm) / (2.0 * kFiniteDifferenceStep);
  }
  const double rel = (analytic - fd).norm().item<double>() / fd.norm().item<double>();
  return {rel < kGradientLimit, "8x8 job, double precision, relative error " + fmt(rel) +
                                    " (limit " + fmt(kGradientLimit) + ")"};
}

// ---- criterion 7 ------------------------------------------------------------
Outcome inpainting_sanity(const PipelineConfig& base) {
  const int n = 64;
  const auto scene = random_lit_scene(n, n, 77);
  const Mask empty(n, n);
  const auto state =
      make_prepared_state(Image(n, n, 0.5f), Image(n, n, 0.5f), empty, AlbedoField(n, n),
                          AlbedoField(n, n, 0.5f), scene.shading, scene.normals);
  DIPConfig cfg = base.dip;
  cfg.iterations = kInpaintingIterations;
  cfg.weights = {1.0, 0.0, 0.0};
  cfg.noise_batch = 1;
  const auto r = run_reshade(state, {}, cfg);
  // Both the returned S* and the last iterate must be under the limit.
  const double returned = mse(r.generated_shading, scene.shading);
  const double last = r.loss_history.back().shading;
  return {returned < kInpaintingLimit && last < kInpaintingLimit && r.seconds < kTenMinutes,
          "w_n = w_f = 0, empty mask, " + std::to_string(kInpaintingIterations) +
              " iterations: full-frame L_s of S* " + fmt(returned) + ", last iterate " + fmt(last) +
              " (limit " + fmt(kInpaintingLimit) + ")"};
}

// ---- training ---------------------------------------------------------------
struct Trained {
  ModelBundle bundle;
  std::map<std::string, double> seconds;
};

Trained train_models(const PipelineConfig& config, const fs::path& work, bool reuse) {
  const fs::path record = work / "training_seconds.json";
  Trained t;
  if (reuse && fs::exists(record)) {
    nlohmann::json j;
    std::ifstream(record) >> j;
    t.seconds = j.get<std::map<std::string, double>>();
    t.bundle = load_models(config, false);
    return t;
  }
  t.bundle = load_models(config, true);
  t.seconds = t.bundle.training_seconds;
  std::ofstream(record) << nlohmann::json(t.seconds).dump(2);
  return t;
}

std::vector<DecompositionSample> held_out_decomposition(const PipelineConfig& config) {
  std::vector<DecompositionSample> out;
  const auto seed = derive_seed(config.seed, 9001);
  for (int i = 0; i < kHeldOutDecomposition; ++i) {
    MondrianSpec m;
    PerlinSpec p;
    m.height = m.width = p.height = p.width = config.image_size;
    m.seed = derive_seed(seed, 2 * i);
    p.seed = derive_seed(seed, 2 * i + 1);
    out.push_back(make_decomposition_sample(m, p));
  }
  return out;
}

Outcome decomposition_oracle(const PipelineConfig& config, const Trained& t) {
  const auto& model = *t.bundle.decomposition;
  const auto held = held_out_decomposition(config);
  const double recon = reconstruction_mse(model, held);

  double idem = 0.0;
  for (const auto& s : held) {
    const auto d = model.decompose(s.image);
    const auto again = model.decompose(form_image(d.albedo, d.shading));
    idem += 0.5 * (mse(again.albedo, d.albedo) + mse(again.shading, d.shading));
  }
  idem /= held.size();
  const auto& val = model.log().validation_loss;
  const bool val_ok = !val.empty() && val.back() <= val.front();
  const double sec = t.seconds.count("decomposition") ? t.seconds.at("decomposition") : NAN;
  note("decomposition: " + std::to_string(model.epochs()) + " epochs, validation loss " +
       fmt(val.front()) + " -> " + fmt(val.back()) + ", re-decomposition MSE " + fmt(idem) +
       " (limit " + fmt(kIdempotenceLimit) + ")");
  const bool pass = recon < kReconstructionLimit && sec < kTrainingBudget &&
                    config.decomposition.samples >= kMinDecompositionSamples &&
                    config.image_size == 64 && val_ok && idem < kIdempotenceLimit;
  return {pass, std::to_string(config.decomposition.samples) + " samples at 64x64, held-out (" +
                    std::to_string(held.size()) + ") reconstruction MSE " + fmt(recon) +
                    " (limit " + fmt(kReconstructionLimit) + "), training " + fmt(sec, 4) + " s"};
}

Outcome discriminator_separation(const PipelineConfig& config, const Trained& t) {
  const auto held = make_discriminator_corpus(kHeldOutDiscriminator, config.image_size,
                                              config.image_size, derive_seed(config.seed, 9002));
  const auto ev = evaluate_discriminator(*t.bundle.discriminator, held);
  const double sec = t.seconds.count("discriminator") ? t.seconds.at("discriminator") : NAN;
  note("discriminator: mean global score real " + fmt(ev.mean_real_score) + " vs fake " +
       fmt(ev.mean_fake_score));
  const bool pass = ev.auc > kAucLimit && ev.mean_iou > kIouLimit && sec < kTrainingBudget &&
                    config.discriminator.samples >= kMinDiscriminatorSamples &&
                    config.discriminator.train.epochs >= kMinDiscriminatorEpochs &&
                    ev.mean_real_score > ev.mean_fake_score;
  return {pass, std::to_string(config.discriminator.samples) + " samples, " +
                    std::to_string(config.discriminator.train.epochs) + " epochs; held-out AUC " +
                    fmt(ev.auc) + " (limit " + fmt(kAucLimit) + "), IoU " + fmt(ev.mean_iou) +
                    " (limit " + fmt(kIouLimit) + "), training " + fmt(sec, 4) + " s"};
}

Outcome feature_robustness(const PipelineConfig& config, const Trained& t) {
  const auto pretrained = FeatureExtractor::load(t.bundle.paths.features_pretrained);
  const auto& fine = *t.bundle.features;
  IlluminationCorpusSpec spec;
  spec.num_classes = config.features.classes;
  spec.scenes_per_class = kHeldOutScenesPerClass;
  spec.lights_per_scene = config.features.lights_per_scene;
  spec.height = spec.width = config.image_size;
  spec.seed = derive_seed(config.seed, 9003);
  const auto held = make_illumination_corpus(spec).groups;

  const double w_pre = mean_within_group_distance(pretrained, held);
  const double w_fine = mean_within_group_distance(fine, held);
  const double b_pre = mean_between_group_distance(pretrained, held);
  const double b_fine = mean_between_group_distance(fine, held);
  const double acc_pre = classification_accuracy(pretrained, held);
  const double acc_fine = classification_accuracy(fine, held);
  const double sec = t.seconds.count("features") ? t.seconds.at("features") : NAN;
  note("features: within/between ratio " + fmt(w_pre / b_pre) + " -> " + fmt(w_fine / b_fine));
  const bool pass =
      w_fine < w_pre && acc_pre - acc_fine <= kAccuracyDropLimit && sec < kTrainingBudget;
  return {pass, "held-out within-group distance " + fmt(w_pre) + " -> " + fmt(w_fine) +
                    ", accuracy " + fmt(acc_pre) + " -> " + fmt(acc_fine) + " (max drop " +
                    fmt(kAccuracyDropLimit) + "), training " + fmt(sec, 4) + " s"};
}

Outcome batched_noise(const PipelineConfig& config, const Trained& t, const PreparedState& state) {
  DIPConfig cfg = config.dip;
  cfg.iterations = 1000000;  // the wall-clock budget ends each row
  const auto rows =
      benchmark_batched_noise(state, t.bundle.view(), cfg, {1, 4}, kBenchmarkSecondsPerRow);
  for (const auto& r : rows) {
    note("B=" + std::to_string(r.batch) + ": " + std::to_string(r.iterations) + " iterations in " +
         fmt(r.seconds) + " s (" + fmt(r.iterations_per_second) + " it/s), loss " +
         fmt(r.initial_loss) + " -> " + fmt(r.best_loss) + ", decrease/s " +
         fmt(r.loss_decrease_per_second));
  }
  // Rates are compared down to a loss level both rows reached, so the large
  // initial drop of L_n does not swamp the comparison.
  const double level = std::max(rows[0].best_loss, rows[1].best_loss);
  note("common level " + fmt(level) + " reached after " + fmt(seconds_to_reach(rows[0], level)) +
       " s at B=1 and " + fmt(seconds_to_reach(rows[1], level)) +
       " s at B=4; (initial - best)/s ratio " +
       fmt(rows[1].loss_decrease_per_second / rows[0].loss_decrease_per_second, 3));
  const double ratio = relative_progress_rate(rows[1], rows[0]);
  return {ratio >= kBatchSpeedupLimit,
          "loss-decrease rate B=4 / B=1 = " + fmt(ratio, 3) + "x (limit " +
              fmt(kBatchSpeedupLimit) + "x; reference GPU figure >= " + fmt(kReferenceSpeedup) +
              "x), " + std::to_string(torch::get_num_threads()) + " intra-op thread(s)"};
}

bool equal_outside(const Image& y, const Image& target, const Mask& mask) {
  for (std::size_t i = 0; i < mask.plane_size(); ++i) {
    if (mask.values()[i] != 0.0f) continue;
    for (int c = 0; c < 3; ++c) {
      if (y.plane(c)[i] != target.plane(c)[i]) return false;
    }
  }
  return true;
}

std::set<int> parse_ids(const std::string& text) {
  std::set<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ids.insert(std::stoi(item));
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "rpnr-acceptance";
  bool reuse = false;
  std::set<int> known_red;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--reuse") {
      reuse = true;
    } else if (arg == "--known-red" && i + 1 < argc) {
      known_red = parse_ids(argv[++i]);
    } else {
      std::cerr << "usage: rpnr_acceptance [--work-dir DIR] [--reuse] [--known-red IDS]\n";
      return 1;
    }
  }
  if (!reuse) fs::remove_all(work);
  fs::create_directories(work);
  ::setenv("RESHADE_CACHE_DIR", (work / "cache").c_str(), 1);

  // The demo configuration: defaults throughout, synthetic normals.
  PipelineConfig config;
  config.normals.backend = "synthetic";
  config = config_from_json(to_json(config));

  Suite suite(known_red);
  suite.run(1, "compositing algebra", [] {
    const auto start = clock_type::now();
    auto o = compositing_algebra();
    o.pass = o.pass && since(start) < kOneMinute;
    return o;
  });

  std::cout << "      training demo models into " << (work / "cache").string() << std::endl;
  Trained trained = train_models(config, work, reuse);
  double training_total = 0.0;
  for (const auto& [k, v] : trained.seconds) training_total += v;

  std::size_t iterations_seen = 0, violations = 0;
  PreparedState const* live_state = nullptr;
  RunOptions first;
  first.out_dir = work / "run1";
  first.observer = [&](const LossRecord&, const ShadingField& s_star) {
    ++iterations_seen;
    const Image y = cut_and_paste(form_image(live_state->albedo_object, s_star), live_state->target,
                                  live_state->mask);
    if (!equal_outside(y, live_state->target, live_state->mask)) ++violations;
  };
  // prepare_job is deterministic, so the observer can use an identical state.
  const PreparedState observer_state =
      prepare_job(load_job(config.job, config.image_size), trained.bundle.view());
  live_state = &observer_state;
  const auto run_start = clock_type::now();
  const EndToEndResult run1 = run_with_models(config, trained.bundle, first);
  const double run_seconds = since(run_start);
  for (const auto& c : run1.checks) {
    note(std::string(c.passed ? "ok   " : "FAIL ") + c.name + ": " + c.detail);
  }

  suite.run(2, "surroundings untouched", [&] {
    const bool final_ok = equal_outside(run1.reshade.output, run1.state.target, run1.state.mask);
    return Outcome{final_ok && violations == 0 &&
                       iterations_seen == static_cast<std::size_t>(config.dip.iterations) &&
                       training_total + run_seconds < kDemoBudget,
                   std::to_string(iterations_seen) + " iterations checked, " +
                       std::to_string(violations) + " violations, final Y " +
                       (final_ok ? "identical" : "DIFFERS") + " outside M; demo " +
                       fmt(training_total + run_seconds) + " s"};
  });
  suite.run(3, "decomposition oracle", [&] { return decomposition_oracle(config, trained); });
  suite.run(4, "discriminator separation",
            [&] { return discriminator_separation(config, trained); });
  suite.run(5, "feature robustness", [&] { return feature_robustness(config, trained); });
  suite.run(6, "batched-noise speedup", [&] {
    const auto start = clock_type::now();
    auto o = batched_noise(config, trained, run1.state);
    o.pass = o.pass && since(start) < kTenMinutes;
    return o;
  });
  suite.run(7, "DIP inpainting sanity", [&] { return inpainting_sanity(config); });
  suite.run(8, "gradient check", [] {
    const auto start = clock_type::now();
    auto o = gradient_check();
    o.pass = o.pass && since(start) < kOneMinute;
    return o;
  });
  suite.run(9, "end-to-end determinism", [&] {
    const auto rerun_start = clock_type::now();
    const PipelineConfig again = config_from_manifest(run1.manifest);
    const ModelBundle bundle = load_models(again, false);
    RunOptions second;
    second.out_dir = work / "run2";
    const EndToEndResult run2 = run_with_models(again, bundle, second);
    const double total = training_total + run_seconds + since(rerun_start);
    const bool same = run2.reshade.output == run1.reshade.output &&
                      file_digest(work / "run1" / "Y.png") == file_digest(work / "run2" / "Y.png");
    return Outcome{same && total < kDemoBudget,
                   std::string("rerun from manifest: Y ") + (same ? "bit-identical" : "DIFFERS") +
                       ", demo total " + fmt(total) + " s (limit " + fmt(kDemoBudget) + ")"};
  });
  suite.run(10, "albedo invariance", [&] {
    const double m =
        albedo_invariance_mse(*trained.bundle.decomposition, run1.state, run1.reshade.output);
    return Outcome{m < kAlbedoInvarianceTolerance, "decompose(Y) vs rho_o inside M: MSE " + fmt(m) +
                                                       " (limit " +
                                                       fmt(kAlbedoInvarianceTolerance) + ")"};
  });

  std::cout << (suite.unexpected_failures() == 0 ? "acceptance: done" : "acceptance: FAILED")
            << std::endl;
  return suite.unexpected_failures() == 0 ? 0 : 2;
}
