#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "rpnr/image_io.hpp"
#include "rpnr/synth.hpp"
#include "test_support.hpp"

namespace rpnr {
namespace {

double mean_adjacent_difference(const Raster& f) {
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      if (x + 1 < f.width()) acc += std::abs(f(y, x + 1) - f(y, x)), ++n;
      if (y + 1 < f.height()) acc += std::abs(f(y + 1, x) - f(y, x)), ++n;
    }
  }
  return acc / static_cast<double>(n);
}

// Independent reference: smoothstep value noise on the same lattice size,
// remapped to [0,1]. Used to calibrate what "slowly varying" means at this
// frequency and resolution.
Raster reference_value_noise(int size, int freq, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdefull);
  std::vector<double> lattice((freq + 1) * (freq + 1));
  for (double& v : lattice) v = rng.uniform();
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  Raster out(size, size, 1);
  double lo = 1e9, hi = -1e9;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = (y + 0.5) / size * freq, u = (x + 0.5) / size * freq;
      const int gy = std::min(int(v), freq - 1), gx = std::min(int(u), freq - 1);
      const double ty = smooth(v - gy), tx = smooth(u - gx);
      auto at = [&](int j, int i) { return lattice[j * (freq + 1) + i]; };
      const double top = at(gy, gx) + tx * (at(gy, gx + 1) - at(gy, gx));
      const double bot = at(gy + 1, gx) + tx * (at(gy + 1, gx + 1) - at(gy + 1, gx));
      const double val = top + ty * (bot - top);
      out(y, x) = static_cast<float>(val);
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
  }
  for (float& v : out.values()) v = static_cast<float>((v - lo) / (hi - lo));
  return out;
}

TEST(Perlin, RemapSpansUnitInterval) {
  for (int freq : {1, 2, 4, 7}) {
    const auto f = gen_perlin({.height = 33, .width = 47, .frequency = freq, .seed = 5});
    const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
    EXPECT_EQ(*lo, 0.0f);
    EXPECT_EQ(*hi, 1.0f);
  }
}

TEST(Perlin, Deterministic) {
  const PerlinSpec spec{.seed = 77};
  test::expect_rasters_equal(gen_perlin(spec), gen_perlin(spec));
  EXPECT_NE(gen_perlin(spec), gen_perlin({.seed = 78}));
}

TEST(Perlin, SlowVariationAtFrequencyTwo) {
  double worst_ref = 0.0, worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    worst_ref = std::max(worst_ref, mean_adjacent_difference(reference_value_noise(64, 2, seed)));
    worst = std::max(worst, mean_adjacent_difference(gen_perlin({.frequency = 2, .seed = seed})));
  }
  RecordProperty("reference_worst", std::to_string(worst_ref));
  RecordProperty("perlin_worst", std::to_string(worst));
  EXPECT_LT(worst_ref, 0.05);
  EXPECT_LT(worst, 0.05);
}

TEST(Perlin, InvalidSpecRejected) {
  EXPECT_THROW(gen_perlin({.frequency = 0}), RangeError);
  EXPECT_THROW(gen_perlin({.height = 0}), RangeError);
}

std::size_t distinct_colors(const AlbedoField& f) {
  std::set<std::tuple<float, float, float>> colors;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) colors.insert({f(y, x, 0), f(y, x, 1), f(y, x, 2)});
  }
  return colors.size();
}

TEST(Mondrian, NoPatchesIsUniform) {
  EXPECT_EQ(distinct_colors(gen_mondrian({.n_patches = 0, .seed = 3})), 1u);
}

TEST(Mondrian, AtMostPatchesPlusOneColours) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto f = gen_mondrian({.n_patches = 10, .seed = seed});
    EXPECT_LE(distinct_colors(f), 11u);
    for (float v : f.values()) {
      ASSERT_GE(v, static_cast<float>(kPatchColorMin));
      ASSERT_LE(v, static_cast<float>(kPatchColorMax));
    }
  }
}

TEST(Mondrian, DeterministicAndValidated) {
  test::expect_rasters_equal(gen_mondrian({.seed = 9}), gen_mondrian({.seed = 9}));
  EXPECT_THROW(gen_mondrian({.n_patches = -1}), RangeError);
  EXPECT_THROW(gen_mondrian({.scale_min = 0.0}), RangeError);
}

TEST(DecompositionSample, ExactReconstruction) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = make_decomposition_sample({.seed = seed}, {.seed = seed + 100});
    test::expect_rasters_equal(s.image, form_image(s.albedo, s.shading));
    const auto [lo, hi] = std::minmax_element(s.shading.values().begin(), s.shading.values().end());
    EXPECT_EQ(*lo, 0.0f);
    EXPECT_EQ(*hi, 1.0f);
    for (std::size_t i = 0; i < s.image.size(); ++i) {
      ASSERT_LE(s.image.values()[i], s.albedo.values()[i]);
    }
  }
  EXPECT_THROW(make_decomposition_sample({.height = 32}, {.height = 64}), ShapeError);
}

TEST(CircleMask, BinaryAreaBoundedDeterministic) {
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200;
  for (int seed = 0; seed < n; ++seed) {
    const Mask m = perlin_circle_mask(64, 64, seed);
    check_binary(m);
    const double frac = mask_area(m) / double(64 * 64);
    ASSERT_GE(frac, kCircleAreaMin);
    ASSERT_LE(frac, kCircleAreaMax);
    lo = std::min(lo, frac);
    hi = std::max(hi, frac);
    sum += frac;
  }
  RecordProperty("area_min", std::to_string(lo));
  RecordProperty("area_mean", std::to_string(sum / n));
  RecordProperty("area_max", std::to_string(hi));
  test::expect_rasters_equal(perlin_circle_mask(40, 50, 4), perlin_circle_mask(40, 50, 4));
  EXPECT_THROW(perlin_circle_mask(7, 64, 0), RangeError);
}

TEST(DistortShading, UntouchedOutsideAndInRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto clean = gen_perlin({.seed = seed});
    const auto d = distort_shading(clean, seed + 1);
    test::expect_rasters_equal(cut_and_paste(d.distorted, clean, d.distortion_mask), d.distorted);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (d.distortion_mask.values()[i] == 0.0f) {
        ASSERT_EQ(d.distorted.values()[i], clean.values()[i]);
      }
      ASSERT_GE(d.distorted.values()[i], 0.0f);
      ASSERT_LE(d.distorted.values()[i], 1.0f);
    }
  }
}

TEST(DistortShading, ConstantFieldChangesInsideOverManySeeds) {
  const ShadingField flat(64, 64, 0.5f);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto d = distort_shading(flat, seed);
    bool changed = false;
    for (std::size_t i = 0; i < flat.size() && !changed; ++i) {
      changed = d.distortion_mask.values()[i] == 1.0f && d.distorted.values()[i] != 0.5f;
    }
    EXPECT_TRUE(changed) << "seed " << seed;
  }
}

TEST(LitScene, ShadingAgreesWithNormals) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto scene = random_lit_scene(32, 40, seed);
    check_unit_normals(scene.normals);
    test::expect_rasters_equal(scene.shading, lambertian_shading(scene.normals, scene.light));
  }
  const LightSpec l = random_light(3);
  EXPECT_NO_THROW(l.validate());
  EXPECT_GE(l.direction[2], std::cos(70.0 * M_PI / 180.0) - 1e-12);
}

TEST(Datasets, WriteThenLoad) {
  test::TempDir dir;
  write_decomposition_dataset(
      {.out_dir = dir / "dec", .count = 3, .seed = 1, .height = 16, .width = 16});
  const auto dec = load_decomposition_dataset(dir / "dec");
  ASSERT_EQ(dec.size(), 3u);
  EXPECT_EQ(dec[0].image.height(), 16);
  for (const auto& s : dec)
    EXPECT_LE(test::max_abs_diff(s.image, form_image(s.albedo, s.shading)), 2.0 / 255.0);

  write_distortion_dataset(
      {.out_dir = dir / "dis", .count = 2, .seed = 1, .height = 16, .width = 16});
  const auto dis = load_distortion_dataset(dir / "dis");
  ASSERT_EQ(dis.size(), 2u);
  for (const auto& r : dis) {
    check_binary(r.sample.distortion_mask);
    check_unit_normals(r.normals, 1e-4);
  }
  EXPECT_THROW(load_decomposition_dataset(dir / "missing"), IoError);
  std::filesystem::create_directories(dir / "empty");
  EXPECT_THROW(load_decomposition_dataset(dir / "empty"), IoError);
}

}  // namespace
}  // namespace rpnr
