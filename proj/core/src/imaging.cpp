#include "rpnr/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "strings.hpp"

namespace rpnr {

Raster::Raster(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 1) {
    throw ShapeError(detail::cat("invalid raster shape ", height, "x", width, "x", channels));
  }
  values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

double dot(const Vec3& a, const Vec3& b) noexcept {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

double norm(const Vec3& v) noexcept { return std::sqrt(dot(v, v)); }

Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw RangeError("cannot normalise a zero vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

LightSpec LightSpec::toward(const Vec3& direction, double intensity) {
  LightSpec light{normalized(direction), intensity};
  light.validate();
  return light;
}

void LightSpec::validate() const {
  if (std::abs(norm(direction) - 1.0) > 1e-6) {
    throw RangeError(
        detail::cat("light direction must be unit length (norm ", norm(direction), ")"));
  }
  if (!(intensity >= 0.0 && intensity <= 1.0)) {
    throw RangeError(detail::cat("light intensity ", intensity, " outside [0,1]"));
  }
}

void Placement::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw RangeError(detail::cat("placement scale must be positive, got ", scale));
  }
}

void check_finite(const Raster& field, std::string_view what) {
  for (float v : field.values()) {
    if (!std::isfinite(v)) throw RangeError(detail::cat(what, " contains non-finite values"));
  }
}

void check_unit_range(const Raster& field, std::string_view what) {
  for (float v : field.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw RangeError(detail::cat(what, " has value ", v, " outside [0,1]"));
    }
  }
}

void check_binary(const Mask& mask, std::string_view what) {
  for (float v : mask.values()) {
    if (v != 0.0f && v != 1.0f) throw RangeError(detail::cat(what, " is not binary (", v, ")"));
  }
}

void check_unit_normals(const NormalField& normals, double tolerance, std::string_view what) {
  const auto nx = normals.plane(0);
  const auto ny = normals.plane(1);
  const auto nz = normals.plane(2);
  for (std::size_t i = 0; i < normals.plane_size(); ++i) {
    const double n =
        std::sqrt(double(nx[i]) * nx[i] + double(ny[i]) * ny[i] + double(nz[i]) * nz[i]);
    if (!(std::abs(n - 1.0) <= tolerance)) {
      throw RangeError(detail::cat(what, " pixel ", i, " has norm ", n));
    }
  }
}

void require_same_extent(const Raster& a, const Raster& b, std::string_view what) {
  if (!a.same_extent(b)) {
    throw ShapeError(detail::cat(what, ": shape mismatch ", a.height(), "x", a.width(), " vs ",
                                 b.height(), "x", b.width()));
  }
}

Raster cut_and_paste(const Raster& fg, const Raster& bg, const Mask& mask) {
  if (!fg.same_shape(bg)) {
    throw ShapeError(detail::cat("cut_and_paste: foreground ", fg.height(), "x", fg.width(), "x",
                                 fg.channels(), " vs background ", bg.height(), "x", bg.width(),
                                 "x", bg.channels()));
  }
  require_same_extent(fg, mask, "cut_and_paste mask");
  Raster out = bg;
  const auto m = mask.plane(0);
  for (int c = 0; c < fg.channels(); ++c) {
    auto dst = out.plane(c);
    const auto src = fg.plane(c);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] != 0.0f) dst[i] = src[i];
    }
  }
  return out;
}

namespace {

template <class F>
F masked_product(const F& field, const Mask& mask) {
  require_same_extent(field, mask, "extract_object");
  F out = field;
  const auto m = mask.plane(0);
  for (int c = 0; c < F::kChannels; ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < m.size(); ++i) p[i] *= m[i];
  }
  return out;
}

}  // namespace

Image extract_object(const Image& source, const Mask& mask) { return masked_product(source, mask); }

AlbedoField extract_object(const AlbedoField& albedo, const Mask& mask) {
  return masked_product(albedo, mask);
}

Image form_image(const AlbedoField& albedo, const ShadingField& shading) {
  require_same_extent(albedo, shading, "form_image");
  Image out(albedo.height(), albedo.width());
  const auto s = shading.plane(0);
  for (int c = 0; c < 3; ++c) {
    const auto a = albedo.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < s.size(); ++i) dst[i] = a[i] * s[i];
  }
  return out;
}

AlbedoField recover_albedo(const Image& image, const ShadingField& shading, float epsilon) {
  require_same_extent(image, shading, "recover_albedo");
  if (!(epsilon > 0.0f)) throw RangeError("recover_albedo epsilon must be positive");
  AlbedoField out(image.height(), image.width());
  const auto s = shading.plane(0);
  for (int c = 0; c < 3; ++c) {
    const auto src = image.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < s.size(); ++i) {
      dst[i] = std::clamp(src[i] / std::max(s[i], epsilon), 0.0f, 1.0f);
    }
  }
  return out;
}

ShadingField lambertian_shading(const NormalField& normals, const LightSpec& light) {
  light.validate();
  check_unit_normals(normals);
  ShadingField out(normals.height(), normals.width());
  const auto nx = normals.plane(0);
  const auto ny = normals.plane(1);
  const auto nz = normals.plane(2);
  auto dst = out.plane(0);
  const auto& d = light.direction;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double cosine = nx[i] * d[0] + ny[i] * d[1] + nz[i] * d[2];
    dst[i] = static_cast<float>(light.intensity * std::max(0.0, cosine));
  }
  return out;
}

namespace {

// Source index covering target coordinate t, or -1 when t is uncovered.
int source_index(int t, int offset, double scale, int source_extent) {
  const auto s = static_cast<int>(std::floor((t - offset) / scale));
  return (s >= 0 && s < source_extent) ? s : -1;
}

}  // namespace

Mask place_mask(const Mask& mask, const Placement& placement, int target_height, int target_width) {
  placement.validate();
  // Walk the full scaled footprint, including target coordinates outside the
  // frame, so that clipped foreground is detected rather than dropped.
  const int y_end = placement.dy + static_cast<int>(std::ceil(mask.height() * placement.scale)) + 1;
  const int x_end = placement.dx + static_cast<int>(std::ceil(mask.width() * placement.scale)) + 1;
  for (int ty = std::min(placement.dy, 0); ty < std::max(y_end, target_height); ++ty) {
    const int sy = source_index(ty, placement.dy, placement.scale, mask.height());
    if (sy < 0) continue;
    for (int tx = std::min(placement.dx, 0); tx < std::max(x_end, target_width); ++tx) {
      const int sx = source_index(tx, placement.dx, placement.scale, mask.width());
      if (sx < 0 || mask(sy, sx) == 0.0f) continue;
      if (ty < 0 || ty >= target_height || tx < 0 || tx >= target_width) {
        throw RangeError(detail::cat("placement (dx=", placement.dx, ", dy=", placement.dy,
                                     ", scale=", placement.scale, ") pushes mask pixel (", sy, ", ",
                                     sx, ") outside ", target_height, "x", target_width));
      }
    }
  }
  return Mask(place_field(mask, placement, target_height, target_width));
}

Raster place_field(const Raster& field, const Placement& placement, int target_height,
                   int target_width, std::span<const float> fill) {
  placement.validate();
  Raster out(target_height, target_width, field.channels());
  for (int c = 0; c < field.channels(); ++c) {
    const float f = fill.empty() ? 0.0f : fill[std::min<std::size_t>(c, fill.size() - 1)];
    for (int ty = 0; ty < target_height; ++ty) {
      const int sy = source_index(ty, placement.dy, placement.scale, field.height());
      for (int tx = 0; tx < target_width; ++tx) {
        const int sx = source_index(tx, placement.dx, placement.scale, field.width());
        out(ty, tx, c) = (sy >= 0 && sx >= 0) ? field(sy, sx, c) : f;
      }
    }
  }
  return out;
}

Mask invert(const Mask& mask) {
  Mask out(mask.height(), mask.width());
  const auto src = mask.plane(0);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = 1.0f - src[i];
  return out;
}

std::size_t mask_area(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](float v) { return v != 0.0f; }));
}

}  // namespace rpnr
