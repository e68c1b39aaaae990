#include "rpnr/normals.hpp"

#include <torch/script.h>

#include <algorithm>
#include <cmath>

#include "strings.hpp"

namespace rpnr {

NormalField NormalEstimator::estimate(const Image& image) const {
  Raster raw;
  try {
    raw = estimate_raw(image);
  } catch (const EstimatorError&) {
    throw;
  } catch (const std::exception& e) {
    throw EstimatorError(detail::cat(backend(), " normal estimator failed: ", e.what()));
  }
  if (raw.channels() != 3 || !raw.same_extent(image)) {
    throw EstimatorError(detail::cat(backend(), " normal estimator returned ", raw.height(), "x",
                                     raw.width(), "x", raw.channels(), " for a ", image.height(),
                                     "x", image.width(), " image"));
  }
  NormalField out(image.height(), image.width());
  for (std::size_t i = 0; i < out.plane_size(); ++i) {
    double n[3] = {raw.plane(0)[i], raw.plane(1)[i], std::abs(raw.plane(2)[i])};
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (!(len > 1e-12) || !std::isfinite(len)) {
      n[0] = 0.0;
      n[1] = 0.0;
      n[2] = 1.0;
    } else {
      for (double& v : n) v /= len;
    }
    for (int c = 0; c < 3; ++c) out.plane(c)[i] = static_cast<float>(n[c]);
  }
  return out;
}

Raster GradientNormalEstimator::estimate_raw(const Image& image) const {
  const int h = image.height();
  const int w = image.width();
  std::vector<double> lum(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      lum[y * w + x] = 0.299 * image(y, x, 0) + 0.587 * image(y, x, 1) + 0.114 * image(y, x, 2);
    }
  }
  auto at = [&](int y, int x) {
    return lum[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)];
  };
  Raster out(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d_col = 0.5 * (at(y, x + 1) - at(y, x - 1));
      const double d_row = 0.5 * (at(y + 1, x) - at(y - 1, x));
      // Surface z = relief * lum; +y points up, against the row index.
      out(y, x, 0) = static_cast<float>(-relief_ * d_col);
      out(y, x, 1) = static_cast<float>(relief_ * d_row);
      out(y, x, 2) = 1.0f;
    }
  }
  return out;
}

struct TorchScriptNormalEstimator::Impl {
  mutable torch::jit::script::Module module;
};

TorchScriptNormalEstimator::TorchScriptNormalEstimator(const std::filesystem::path& checkpoint) {
  if (checkpoint.empty() || !std::filesystem::exists(checkpoint)) {
    throw EstimatorError(
        detail::cat("normal estimator checkpoint not found: '", checkpoint.string(), "'"));
  }
  impl_ = std::make_unique<Impl>();
  try {
    impl_->module = torch::jit::load(checkpoint.string());
    impl_->module.eval();
  } catch (const std::exception& e) {
    throw EstimatorError(
        detail::cat("cannot load normal estimator ", checkpoint.string(), ": ", e.what()));
  }
}

TorchScriptNormalEstimator::~TorchScriptNormalEstimator() = default;

Raster TorchScriptNormalEstimator::estimate_raw(const Image& image) const {
  torch::NoGradGuard no_grad;
  auto input = torch::from_blob(const_cast<float*>(image.values().data()),
                                {1, 3, image.height(), image.width()}, torch::kFloat32)
                   .clone();
  auto output = impl_->module.forward({input}).toTensor().to(torch::kFloat32).contiguous();
  if (output.dim() != 4 || output.size(0) != 1 || output.size(1) != 3) {
    throw EstimatorError(
        detail::cat("pretrained normal estimator returned shape ", output.sizes()));
  }
  Raster out(static_cast<int>(output.size(2)), static_cast<int>(output.size(3)), 3);
  std::copy_n(output.data_ptr<float>(), out.size(), out.values().begin());
  return out;
}

std::unique_ptr<NormalEstimator> make_normal_estimator(std::string_view backend,
                                                       const std::filesystem::path& checkpoint) {
  if (backend == "synthetic") return std::make_unique<GradientNormalEstimator>();
  if (backend == "pretrained") return std::make_unique<TorchScriptNormalEstimator>(checkpoint);
  throw EstimatorError(detail::cat("unknown normal backend '", backend, "'"));
}

SceneKind parse_scene_kind(std::string_view name) {
  if (name == "sphere") return SceneKind::sphere;
  if (name == "plane") return SceneKind::plane;
  if (name == "two_spheres") return SceneKind::two_spheres;
  throw std::invalid_argument(detail::cat("unknown scene kind '", name, "'"));
}

NormalField flat_normals(int height, int width) {
  NormalField n(height, width);
  std::fill(n.plane(2).begin(), n.plane(2).end(), 1.0f);
  return n;
}

void paint_sphere(NormalField& normals, Mask& object, double cy, double cx, double radius) {
  for (int y = 0; y < normals.height(); ++y) {
    for (int x = 0; x < normals.width(); ++x) {
      const double u = (x - cx) / radius;
      const double v = -(y - cy) / radius;
      const double r2 = u * u + v * v;
      if (r2 >= 1.0) continue;
      const double z = std::sqrt(1.0 - r2);
      // Re-normalise in double so the stored floats stay within tolerance.
      const double len = std::sqrt(r2 + z * z);
      normals(y, x, 0) = static_cast<float>(u / len);
      normals(y, x, 1) = static_cast<float>(v / len);
      normals(y, x, 2) = static_cast<float>(z / len);
      object(y, x) = 1.0f;
    }
  }
}

SyntheticScene synth_scene(SceneKind kind, int height, int width, const LightSpec& light,
                           const Vec3& albedo) {
  if (height < 1 || width < 1) throw ShapeError("synth_scene needs positive dimensions");
  SyntheticScene scene;
  scene.normals = flat_normals(height, width);
  scene.object = Mask(height, width);
  const double cy = (height - 1) / 2.0;
  const double cx = (width - 1) / 2.0;
  const double extent = std::min(height, width);
  switch (kind) {
    case SceneKind::plane:
      break;
    case SceneKind::sphere:
      paint_sphere(scene.normals, scene.object, cy, cx, 0.4 * extent);
      break;
    case SceneKind::two_spheres:
      paint_sphere(scene.normals, scene.object, cy, 0.28 * (width - 1), 0.22 * extent);
      paint_sphere(scene.normals, scene.object, cy, 0.72 * (width - 1), 0.22 * extent);
      break;
  }
  scene.shading = lambertian_shading(scene.normals, light);
  AlbedoField rho(height, width);
  for (int c = 0; c < 3; ++c) {
    std::fill(rho.plane(c).begin(), rho.plane(c).end(), static_cast<float>(albedo[c]));
  }
  scene.image = form_image(rho, scene.shading);
  return scene;
}

NormalField composite_normals(const NormalField& n_source, const NormalField& n_target,
                              const Mask& mask) {
  return cut_and_paste(n_source, n_target, mask);
}

}  // namespace rpnr
