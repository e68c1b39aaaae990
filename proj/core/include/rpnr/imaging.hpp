#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rpnr {

/// Thrown when two fields that must share a shape do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a field or parameter violates its value-range invariant.
class RangeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Channel-major (planar) float raster. Typed wrappers below give the
/// planes their meaning; Raster itself only knows about shape.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  float& operator()(int y, int x, int c = 0) noexcept { return values_[index(y, x, c)]; }
  float operator()(int y, int x, int c = 0) const noexcept { return values_[index(y, x, c)]; }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<float> plane(int c) noexcept {
    return std::span<float>(values_).subspan(c * plane_size(), plane_size());
  }
  std::span<const float> plane(int c) const noexcept {
    return std::span<const float>(values_).subspan(c * plane_size(), plane_size());
  }

  bool same_extent(const Raster& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool same_shape(const Raster& other) const noexcept {
    return same_extent(other) && channels_ == other.channels_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> values_;
};

/// Raster with a fixed channel count and a domain tag, so that e.g. an
/// albedo field cannot be passed where a shading field is expected.
template <class Tag, int Channels>
class Field : public Raster {
 public:
  static constexpr int kChannels = Channels;

  Field() = default;
  Field(int height, int width, float fill = 0.0f) : Raster(height, width, Channels, fill) {}
  explicit Field(Raster raster) : Raster(std::move(raster)) {
    if (channels() != Channels) {
      throw ShapeError("field expects " + std::to_string(Channels) + " channels, got " +
                       std::to_string(channels()));
    }
  }
};

struct ImageTag {};
struct AlbedoTag {};
struct ShadingTag {};
struct NormalTag {};
struct MaskTag {};
struct RealnessTag {};

using Image = Field<ImageTag, 3>;
using AlbedoField = Field<AlbedoTag, 3>;
using ShadingField = Field<ShadingTag, 1>;
using NormalField = Field<NormalTag, 3>;
/// Binary footprint; every value is exactly 0.0f or 1.0f.
using Mask = Field<MaskTag, 1>;
/// Per-pixel realness in [0,1] emitted by the discriminator.
using RealnessMap = Field<RealnessTag, 1>;

using Vec3 = std::array<double, 3>;

double dot(const Vec3& a, const Vec3& b) noexcept;
double norm(const Vec3& v) noexcept;
Vec3 normalized(const Vec3& v);

/// Uni-color directional light. `direction` points from the surface toward
/// the light.
struct LightSpec {
  Vec3 direction{0.0, 0.0, 1.0};
  double intensity = 1.0;

  /// Builds a light from an arbitrary non-zero direction.
  static LightSpec toward(const Vec3& direction, double intensity = 1.0);
  void validate() const;
};

/// Where a source fragment lands in the target frame. A source pixel (y, x)
/// covers target rows [dy + y*scale, dy + (y+1)*scale) and likewise columns.
struct Placement {
  int dx = 0;
  int dy = 0;
  double scale = 1.0;

  bool is_identity() const noexcept { return dx == 0 && dy == 0 && scale == 1.0; }
  void validate() const;
};

inline constexpr float kDefaultAlbedoEpsilon = 1e-3f;
inline constexpr double kNormalTolerance = 1e-4;

// Invariant checks; each throws RangeError naming `what`.
void check_finite(const Raster& field, std::string_view what);
void check_unit_range(const Raster& field, std::string_view what);
void check_binary(const Mask& mask, std::string_view what = "mask");
void check_unit_normals(const NormalField& normals, double tolerance = kNormalTolerance,
                        std::string_view what = "normals");
void require_same_extent(const Raster& a, const Raster& b, std::string_view what);

/// M⊙A + (1−M)⊙B as an exact per-pixel selection. fg and bg must share
/// shape; the single-channel mask is broadcast across channels.
Raster cut_and_paste(const Raster& fg, const Raster& bg, const Mask& mask);

template <class F>
F cut_and_paste(const F& fg, const F& bg, const Mask& mask) {
  return F(cut_and_paste(static_cast<const Raster&>(fg), static_cast<const Raster&>(bg), mask));
}

/// mask ⊙ source: the object alone, zero elsewhere.
Image extract_object(const Image& source, const Mask& mask);
AlbedoField extract_object(const AlbedoField& albedo, const Mask& mask);

/// I = ρ ⊙ S with the shading broadcast over the colour channels.
Image form_image(const AlbedoField& albedo, const ShadingField& shading);

/// ρ = I / max(S, epsilon), clamped to [0,1].
AlbedoField recover_albedo(const Image& image, const ShadingField& shading,
                           float epsilon = kDefaultAlbedoEpsilon);

/// intensity · max(0, N·light). Normals must be unit length.
ShadingField lambertian_shading(const NormalField& normals, const LightSpec& light);

/// Nearest-neighbour translate/scale of a mask into a target-sized frame.
/// Throws RangeError if any foreground pixel would leave the frame.
Mask place_mask(const Mask& mask, const Placement& placement, int target_height, int target_width);

/// Same mapping as place_mask for an arbitrary field. Target pixels not
/// covered by the source take `fill` (per channel; the last value repeats).
Raster place_field(const Raster& field, const Placement& placement, int target_height,
                   int target_width, std::span<const float> fill = {});

template <class F>
F place_field(const F& field, const Placement& placement, int target_height, int target_width,
              std::span<const float> fill = {}) {
  return F(
      place_field(static_cast<const Raster&>(field), placement, target_height, target_width, fill));
}

/// Complement 1 − M.
Mask invert(const Mask& mask);
std::size_t mask_area(const Mask& mask);

}  // namespace rpnr
