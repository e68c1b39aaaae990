#pragma once

#include <filesystem>
#include <stdexcept>

#include "rpnr/imaging.hpp"

namespace rpnr {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit RGB PNG, values divided by 255 on load.
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);
AlbedoField load_albedo(const std::filesystem::path& path);
void save_albedo(const std::filesystem::path& path, const AlbedoField& albedo);

// Grayscale PNG; pixels >= 128 become 1.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const Mask& mask);

// Single-channel 16-bit PNG, value / 65535.
ShadingField load_shading16(const std::filesystem::path& path);
void save_shading16(const std::filesystem::path& path, const Raster& shading);

// Three-channel 16-bit PNG storing (n + 1) / 2; re-normalised on load.
NormalField load_normals16(const std::filesystem::path& path);
void save_normals16(const std::filesystem::path& path, const NormalField& normals);

}  // namespace rpnr
