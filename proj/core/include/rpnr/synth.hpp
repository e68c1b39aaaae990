#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rpnr/imaging.hpp"

namespace rpnr {

struct PerlinSpec {
  int height = 64;
  int width = 64;
  int frequency = 2;  // lattice cells per dimension
  std::uint64_t seed = 0;

  void validate() const;
};

struct MondrianSpec {
  int n_patches = 10;
  int height = 64;
  int width = 64;
  double rotation_min_deg = 0.0;
  double rotation_max_deg = 45.0;
  double scale_min = 0.8;
  double scale_max = 1.2;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kPatchColorMin = 0.1;
inline constexpr double kPatchColorMax = 0.95;

struct DecompositionSample {
  Image image;
  AlbedoField albedo;
  ShadingField shading;
};

struct DistortionSample {
  ShadingField clean;
  ShadingField distorted;
  Mask distortion_mask;
};

/// Smooth gradient noise remapped affinely onto exactly [0,1].
ShadingField gen_perlin(const PerlinSpec& spec);

/// Background colour plus axis-aligned patches, then one random rotation
/// and scale with nearest-neighbour resampling, so the field stays
/// piecewise constant with at most n_patches + 1 colours.
AlbedoField gen_mondrian(const MondrianSpec& spec);

DecompositionSample make_decomposition_sample(const MondrianSpec& mspec, const PerlinSpec& pspec);

/// Filled disc whose radius is modulated per angle by periodic gradient
/// noise. Rejection-sampled until its area lies in [2%, 40%] of the frame.
Mask perlin_circle_mask(int height, int width, std::uint64_t seed);

inline constexpr double kCircleAreaMin = 0.02;
inline constexpr double kCircleAreaMax = 0.40;

/// Replaces `clean` inside a perlin_circle_mask region with fresh noise.
DistortionSample distort_shading(const ShadingField& clean, std::uint64_t seed);

/// Random Lambertian scene used as a source of shading fields that agree
/// with their normals: a tilted plane with up to three spheres.
struct LitScene {
  NormalField normals;
  ShadingField shading;
  LightSpec light;
  Mask object;
};

LitScene random_lit_scene(int height, int width, std::uint64_t seed);

/// Directional light within 70° of the view axis, intensity in [0.6, 1].
LightSpec random_light(std::uint64_t seed);

// ---- dataset emitters -------------------------------------------------------

struct DatasetSpec {
  std::filesystem::path out_dir;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int n_patches = 10;
  int perlin_frequency = 2;
};

/// Writes out_dir/{images,albedo,shading}/NNNNNN.png.
void write_decomposition_dataset(const DatasetSpec& spec);

/// Clean shading with its normals, one per sample index.
using ShadingSource = std::function<LitScene(std::size_t index)>;

/// Writes out_dir/{clean,distorted,masks,normals}/NNNNNN.png. Clean fields
/// come from `source`, or from random_lit_scene when none is given.
void write_distortion_dataset(const DatasetSpec& spec, const ShadingSource& source = {});

std::string sample_name(std::size_t index);

struct DistortionRecord {
  DistortionSample sample;
  NormalField normals;
};

/// Throws IoError on an empty directory or missing/unmatched files.
std::vector<DecompositionSample> load_decomposition_dataset(const std::filesystem::path& dir);
std::vector<DistortionRecord> load_distortion_dataset(const std::filesystem::path& dir);

}  // namespace rpnr
