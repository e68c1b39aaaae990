#include <benchmark/benchmark.h>

#include "rpnr/decomposition.hpp"
#include "rpnr/dip.hpp"
#include "rpnr/discriminator.hpp"
#include "rpnr/imaging.hpp"
#include "rpnr/nn.hpp"
#include "rpnr/normals.hpp"
#include "rpnr/random.hpp"
#include "rpnr/synth.hpp"

namespace {

using namespace rpnr;

template <typename F>
F random_field(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  F f(h, w);
  for (float& v : f.values()) v = static_cast<float>(rng.uniform());
  return f;
}

Mask disc_mask(int size) {
  Mask m(size, size);
  const double r = size / 4.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dy = y - size / 2.0, dx = x - size / 2.0;
      m(y, x, 0) = dy * dy + dx * dx <= r * r ? 1.0f : 0.0f;
    }
  }
  return m;
}

void BM_CutAndPaste(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_field<Image>(n, n, 1);
  const auto b = random_field<Image>(n, n, 2);
  const auto m = disc_mask(n);
  for (auto _ : state) benchmark::DoNotOptimize(cut_and_paste(a, b, m));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_CutAndPaste)->Arg(64)->Arg(256);

void BM_DecompositionForward(benchmark::State& state) {
  seed_torch(0);
  UNet net(default_decomposition_arch());
  net->eval();
  const auto x = torch::rand({1, 3, 64, 64});
  torch::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x).map);
}
BENCHMARK(BM_DecompositionForward)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorForward(benchmark::State& state) {
  seed_torch(0);
  const auto arch = default_discriminator_arch();
  UNet net(arch);
  net->eval();
  const auto x = torch::rand({1, arch.in_channels, 64, 64});
  torch::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x).global);
}
BENCHMARK(BM_DiscriminatorForward)->Unit(benchmark::kMillisecond);

// Shading-only DIP iterations for one 64x64 job; the argument is the noise batch B.
void BM_DipIterations(benchmark::State& state) {
  seed_torch(0);
  const int n = 64;
  const Mask mask = disc_mask(n);
  const auto scene = random_lit_scene(n, n, 5);
  const auto prepared =
      make_prepared_state(random_field<Image>(n, n, 1), random_field<Image>(n, n, 2), mask,
                          extract_object(random_field<AlbedoField>(n, n, 3), mask),
                          random_field<AlbedoField>(n, n, 4), scene.shading, scene.normals);
  DIPConfig cfg;
  cfg.iterations = 10;
  cfg.noise_batch = static_cast<int>(state.range(0));
  cfg.weights = {1.0, 0.0, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(run_reshade(prepared, {}, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.iterations);
}
BENCHMARK(BM_DipIterations)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
