#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rpnr/imaging.hpp"

namespace rpnr {

/// Normal coordinates: +x to the right, +y up (against image rows), +z toward
/// the viewer. Every estimator output satisfies z >= 0.
class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NormalEstimator {
 public:
  virtual ~NormalEstimator() = default;

  virtual std::string backend() const = 0;

  /// Runs the backend, then re-normalises to unit, camera-facing vectors.
  /// Backend failures surface as EstimatorError.
  NormalField estimate(const Image& image) const;

 protected:
  /// Raw three-channel output; need not be unit length.
  virtual Raster estimate_raw(const Image& image) const = 0;
};

/// Shape-from-shading heuristic: luminance is treated as a height map and
/// normals follow its central-difference gradient. Needs no checkpoint.
class GradientNormalEstimator final : public NormalEstimator {
 public:
  explicit GradientNormalEstimator(double relief = 8.0) : relief_(relief) {}
  std::string backend() const override { return "synthetic"; }

 protected:
  Raster estimate_raw(const Image& image) const override;

 private:
  double relief_;
};

/// Wraps a pretrained TorchScript network mapping [1,3,H,W] images in [0,1]
/// to [1,3,H,W] normals. The network is used as a frozen black box.
class TorchScriptNormalEstimator final : public NormalEstimator {
 public:
  explicit TorchScriptNormalEstimator(const std::filesystem::path& checkpoint);
  ~TorchScriptNormalEstimator() override;
  std::string backend() const override { return "pretrained"; }

 protected:
  Raster estimate_raw(const Image& image) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "synthetic" or "pretrained"; the latter requires a checkpoint path.
std::unique_ptr<NormalEstimator> make_normal_estimator(
    std::string_view backend, const std::filesystem::path& checkpoint = {});

inline NormalField estimate_normals(const NormalEstimator& estimator, const Image& image) {
  return estimator.estimate(image);
}

enum class SceneKind { sphere, plane, two_spheres };

SceneKind parse_scene_kind(std::string_view name);

/// Analytic scene: exact normals, their Lambertian shading and an image with
/// constant albedo. `object` marks the sphere pixels (empty for a plane).
struct SyntheticScene {
  Image image;
  NormalField normals;
  ShadingField shading;
  Mask object;
};

inline constexpr Vec3 kDefaultSceneAlbedo{0.8, 0.6, 0.4};

SyntheticScene synth_scene(SceneKind kind, int height, int width, const LightSpec& light,
                           const Vec3& albedo = kDefaultSceneAlbedo);

/// Writes a sphere of `radius` pixels centred at (cy, cx) into `normals`
/// and `object`, replacing whatever was there.
void paint_sphere(NormalField& normals, Mask& object, double cy, double cx, double radius);

/// Fronto-parallel plane normals (0, 0, 1).
NormalField flat_normals(int height, int width);

/// CP applied channelwise; both inputs unit-norm, so the output is too.
NormalField composite_normals(const NormalField& n_source, const NormalField& n_target,
                              const Mask& mask);

}  // namespace rpnr
