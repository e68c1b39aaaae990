#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "rpnr/imaging.hpp"
#include "rpnr/random.hpp"

namespace rpnr::test {

inline Raster random_raster(int h, int w, int c, std::uint64_t seed, double lo = 0.0,
                            double hi = 1.0) {
  Rng rng(seed);
  Raster r(h, w, c);
  for (float& v : r.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return r;
}

template <class F>
F random_field(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  return F(random_raster(h, w, F::kChannels, seed, lo, hi));
}

inline Mask random_mask(int h, int w, std::uint64_t seed, double p = 0.5) {
  Rng rng(seed);
  Mask m(h, w);
  for (float& v : m.values()) v = rng.uniform() < p ? 1.0f : 0.0f;
  return m;
}

inline NormalField random_normals(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  NormalField n(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 v = normalized({rng.normal(), rng.normal(), std::abs(rng.normal()) + 0.1});
      for (int c = 0; c < 3; ++c) n(y, x, c) = static_cast<float>(v[c]);
    }
  }
  return n;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rpnr") {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = tag;
    if (info != nullptr) name += std::string("-") + info->test_suite_name() + "-" + info->name();
    path_ = std::filesystem::temp_directory_path() /
            (name + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

/// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
 public:
  EnvGuard(std::string name, const std::string& value) : name_(std::move(name)) {
    if (const char* old = std::getenv(name_.c_str())) old_ = old;
    ::setenv(name_.c_str(), value.c_str(), 1);
  }
  ~EnvGuard() {
    if (old_) {
      ::setenv(name_.c_str(), old_->c_str(), 1);
    } else {
      ::unsetenv(name_.c_str());
    }
  }

 private:
  std::string name_;
  std::optional<std::string> old_;
};

inline void expect_rasters_equal(const Raster& a, const Raster& b) {
  ASSERT_TRUE(a.same_shape(b));
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    ASSERT_EQ(va[i], vb[i]) << "at flat index " << i;
  }
}

inline double max_abs_diff(const Raster& a, const Raster& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double(a.values()[i]) - b.values()[i]));
  }
  return m;
}

}  // namespace rpnr::test
