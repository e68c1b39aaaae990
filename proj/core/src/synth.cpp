#include "rpnr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rpnr/image_io.hpp"
#include "rpnr/normals.hpp"
#include "rpnr/random.hpp"
#include "strings.hpp"

namespace rpnr {
namespace fs = std::filesystem;

namespace {

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lerp(double a, double b, double t) { return a + t * (b - a); }

ShadingField remap_unit(const std::vector<double>& raw, int height, int width) {
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  ShadingField out(height, width);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    dst[i] = range > 0.0 ? static_cast<float>((raw[i] - *lo) / range) : 0.0f;
  }
  return out;
}

}  // namespace

void PerlinSpec::validate() const {
  if (height < 1 || width < 1) throw RangeError("perlin field needs positive dimensions");
  if (frequency < 1) throw RangeError("perlin frequency must be >= 1");
}

void MondrianSpec::validate() const {
  if (height < 1 || width < 1) throw RangeError("mondrian field needs positive dimensions");
  if (n_patches < 0) throw RangeError("n_patches must be >= 0");
  if (!(scale_min > 0.0) || scale_max < scale_min) throw RangeError("invalid mondrian scale range");
  if (rotation_max_deg < rotation_min_deg) throw RangeError("invalid mondrian rotation range");
}

ShadingField gen_perlin(const PerlinSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int cells = spec.frequency;
  const int lattice = cells + 1;
  std::vector<std::array<double, 2>> gradients(static_cast<std::size_t>(lattice) * lattice);
  for (auto& g : gradients) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    g = {std::cos(angle), std::sin(angle)};
  }
  auto corner = [&](int gy, int gx, double dy, double dx) {
    const auto& g = gradients[gy * lattice + gx];
    return g[0] * dx + g[1] * dy;
  };

  std::vector<double> raw(static_cast<std::size_t>(spec.height) * spec.width);
  for (int y = 0; y < spec.height; ++y) {
    const double v = (y + 0.5) / spec.height * cells;
    const int gy = std::min(static_cast<int>(v), cells - 1);
    const double fy = v - gy;
    for (int x = 0; x < spec.width; ++x) {
      const double u = (x + 0.5) / spec.width * cells;
      const int gx = std::min(static_cast<int>(u), cells - 1);
      const double fx = u - gx;
      const double top = lerp(corner(gy, gx, fy, fx), corner(gy, gx + 1, fy, fx - 1.0), fade(fx));
      const double bottom = lerp(corner(gy + 1, gx, fy - 1.0, fx),
                                 corner(gy + 1, gx + 1, fy - 1.0, fx - 1.0), fade(fx));
      raw[y * spec.width + x] = lerp(top, bottom, fade(fy));
    }
  }
  return remap_unit(raw, spec.height, spec.width);
}

AlbedoField gen_mondrian(const MondrianSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto color = [&] {
    return std::array<float, 3>{static_cast<float>(rng.uniform(kPatchColorMin, kPatchColorMax)),
                                static_cast<float>(rng.uniform(kPatchColorMin, kPatchColorMax)),
                                static_cast<float>(rng.uniform(kPatchColorMin, kPatchColorMax))};
  };
  const int h = spec.height;
  const int w = spec.width;
  AlbedoField canvas(h, w);
  const auto background = color();
  for (int c = 0; c < 3; ++c)
    std::fill(canvas.plane(c).begin(), canvas.plane(c).end(), background[c]);

  for (int k = 0; k < spec.n_patches; ++k) {
    const int ph = rng.uniform_int(std::max(1, h / 8), std::max(1, h / 2));
    const int pw = rng.uniform_int(std::max(1, w / 8), std::max(1, w / 2));
    const int y0 = rng.uniform_int(0, h - ph);
    const int x0 = rng.uniform_int(0, w - pw);
    const auto fill = color();
    for (int c = 0; c < 3; ++c) {
      for (int y = y0; y < y0 + ph; ++y) {
        for (int x = x0; x < x0 + pw; ++x) canvas(y, x, c) = fill[c];
      }
    }
  }

  const double angle =
      rng.uniform(spec.rotation_min_deg, spec.rotation_max_deg) * std::numbers::pi / 180.0;
  const double scale = rng.uniform(spec.scale_min, spec.scale_max);
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  const double cos_a = std::cos(angle);
  const double sin_a = std::sin(angle);
  AlbedoField out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map: rotate by -angle and shrink by the scale about the centre.
      const double dy = (y - cy) / scale;
      const double dx = (x - cx) / scale;
      const double sy = cos_a * dy - sin_a * dx + cy;
      const double sx = sin_a * dy + cos_a * dx + cx;
      const int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
      const int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
      for (int c = 0; c < 3; ++c) out(y, x, c) = canvas(iy, ix, c);
    }
  }
  return out;
}

DecompositionSample make_decomposition_sample(const MondrianSpec& mspec, const PerlinSpec& pspec) {
  if (mspec.height != pspec.height || mspec.width != pspec.width) {
    throw ShapeError(detail::cat("mondrian ", mspec.height, "x", mspec.width, " vs perlin ",
                                 pspec.height, "x", pspec.width));
  }
  DecompositionSample sample;
  sample.albedo = gen_mondrian(mspec);
  sample.shading = gen_perlin(pspec);
  sample.image = form_image(sample.albedo, sample.shading);
  return sample;
}

Mask perlin_circle_mask(int height, int width, std::uint64_t seed) {
  if (height < 8 || width < 8) throw RangeError("perlin_circle_mask needs dimensions >= 8");
  Rng rng(seed);
  constexpr int kKnots = 8;
  const double frame = static_cast<double>(height) * width;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::array<double, kKnots> slopes{};
    for (double& s : slopes) s = rng.uniform(-1.0, 1.0);
    const double cy = rng.uniform(0.0, height - 1.0);
    const double cx = rng.uniform(0.0, width - 1.0);
    const double target_area = rng.uniform(0.03, 0.30) * frame;
    const double base_radius = std::sqrt(target_area / std::numbers::pi);

    Mask mask(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dy = y - cy;
        const double dx = x - cx;
        // Periodic 1-D gradient noise over the angle.
        const double t =
            (std::atan2(dy, dx) + std::numbers::pi) / (2.0 * std::numbers::pi) * kKnots;
        const int i = std::min(static_cast<int>(t), kKnots - 1);
        const double f = t - i;
        const double n = lerp(slopes[i] * f, slopes[(i + 1) % kKnots] * (f - 1.0), fade(f));
        const double radius = base_radius * (1.0 + 0.8 * n);
        if (dx * dx + dy * dy <= radius * radius) mask(y, x) = 1.0f;
      }
    }
    const double fraction = mask_area(mask) / frame;
    if (fraction >= kCircleAreaMin && fraction <= kCircleAreaMax) return mask;
  }
  throw std::logic_error("perlin_circle_mask: rejection sampling did not converge");
}

DistortionSample distort_shading(const ShadingField& clean, std::uint64_t seed) {
  check_unit_range(clean, "clean shading");
  DistortionSample sample;
  sample.clean = clean;
  sample.distortion_mask = perlin_circle_mask(clean.height(), clean.width(), derive_seed(seed, 1));
  const ShadingField fresh = gen_perlin({clean.height(), clean.width(), 4, derive_seed(seed, 2)});
  sample.distorted = cut_and_paste(fresh, clean, sample.distortion_mask);
  return sample;
}

LitScene random_lit_scene(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  LitScene scene;
  const Vec3 tilt = normalized({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0});
  scene.normals = NormalField(height, width);
  for (int c = 0; c < 3; ++c) {
    std::fill(scene.normals.plane(c).begin(), scene.normals.plane(c).end(),
              static_cast<float>(tilt[c]));
  }
  scene.object = Mask(height, width);
  const int spheres = rng.uniform_int(1, 3);
  const double extent = std::min(height, width);
  for (int k = 0; k < spheres; ++k) {
    const double radius = rng.uniform(0.12, 0.3) * extent;
    paint_sphere(scene.normals, scene.object, rng.uniform(0.0, height - 1.0),
                 rng.uniform(0.0, width - 1.0), radius);
  }
  scene.light = random_light(rng.next());
  scene.shading = lambertian_shading(scene.normals, scene.light);
  return scene;
}

LightSpec random_light(std::uint64_t seed) {
  Rng rng(seed);
  const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt = rng.uniform(0.0, 70.0) * std::numbers::pi / 180.0;
  return LightSpec::toward(
      {std::cos(azimuth) * std::sin(tilt), std::sin(azimuth) * std::sin(tilt), std::cos(tilt)},
      rng.uniform(0.6, 1.0));
}

std::string sample_name(std::size_t index) {
  std::string digits = std::to_string(index);
  return std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits + ".png";
}

void write_decomposition_dataset(const DatasetSpec& spec) {
  for (const char* sub : {"images", "albedo", "shading"})
    fs::create_directories(spec.out_dir / sub);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::uint64_t s = derive_seed(spec.seed, i);
    MondrianSpec mspec;
    mspec.n_patches = spec.n_patches;
    mspec.height = spec.height;
    mspec.width = spec.width;
    mspec.seed = derive_seed(s, 0);
    const PerlinSpec pspec{spec.height, spec.width, spec.perlin_frequency, derive_seed(s, 1)};
    const auto sample = make_decomposition_sample(mspec, pspec);
    const auto name = sample_name(i);
    save_image(spec.out_dir / "images" / name, sample.image);
    save_albedo(spec.out_dir / "albedo" / name, sample.albedo);
    save_shading16(spec.out_dir / "shading" / name, sample.shading);
  }
}

void write_distortion_dataset(const DatasetSpec& spec, const ShadingSource& source) {
  for (const char* sub : {"clean", "distorted", "masks", "normals"}) {
    fs::create_directories(spec.out_dir / sub);
  }
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::uint64_t s = derive_seed(spec.seed, i);
    const LitScene scene =
        source ? source(i) : random_lit_scene(spec.height, spec.width, derive_seed(s, 0));
    const auto sample = distort_shading(scene.shading, derive_seed(s, 1));
    const auto name = sample_name(i);
    save_shading16(spec.out_dir / "clean" / name, sample.clean);
    save_shading16(spec.out_dir / "distorted" / name, sample.distorted);
    save_mask(spec.out_dir / "masks" / name, sample.distortion_mask);
    save_normals16(spec.out_dir / "normals" / name, scene.normals);
  }
}

namespace {

std::vector<std::string> listing(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw IoError(detail::cat("missing dataset directory ", dir.string()));
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> matched_listing(const fs::path& root,
                                         std::initializer_list<const char*> subs) {
  const auto names = listing(root / *subs.begin());
  if (names.empty()) throw IoError(detail::cat("dataset ", root.string(), " is empty"));
  for (const char* sub : subs) {
    if (listing(root / sub) != names) {
      throw IoError(detail::cat("dataset ", root.string(), ": ", sub, "/ does not match ",
                                *subs.begin(), "/ file for file"));
    }
  }
  return names;
}

}  // namespace

std::vector<DecompositionSample> load_decomposition_dataset(const fs::path& dir) {
  std::vector<DecompositionSample> samples;
  for (const auto& name : matched_listing(dir, {"images", "albedo", "shading"})) {
    DecompositionSample s{load_image(dir / "images" / name), load_albedo(dir / "albedo" / name),
                          load_shading16(dir / "shading" / name)};
    if (!s.image.same_extent(s.albedo) || !s.image.same_extent(s.shading)) {
      throw IoError(detail::cat("dataset ", dir.string(), ": sample ", name, " has mixed shapes"));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<DistortionRecord> load_distortion_dataset(const fs::path& dir) {
  std::vector<DistortionRecord> records;
  for (const auto& name : matched_listing(dir, {"clean", "distorted", "masks", "normals"})) {
    DistortionRecord r{{load_shading16(dir / "clean" / name),
                        load_shading16(dir / "distorted" / name), load_mask(dir / "masks" / name)},
                       load_normals16(dir / "normals" / name)};
    if (!r.sample.clean.same_extent(r.sample.distorted) ||
        !r.sample.clean.same_extent(r.sample.distortion_mask) ||
        !r.sample.clean.same_extent(r.normals)) {
      throw IoError(detail::cat("dataset ", dir.string(), ": sample ", name, " has mixed shapes"));
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace rpnr
