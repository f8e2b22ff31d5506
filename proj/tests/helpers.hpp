// Shared fixtures for the test suite.
#pragma once

#include <filesystem>

#include "pose6d/common.hpp"
#include "pose6d/geometry.hpp"

namespace testutil {

inline pose6d::CameraIntrinsics test_cam(int w = 640, int h = 480, double f = 580.0) {
  pose6d::CameraIntrinsics cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto p = base / ("pose6d_test_" + std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(p, ec)) {
        path_ = p;
        return;
      }
    }
    throw std::runtime_error("cannot create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? path_.string() : (path_ / sub).string();
  }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline pose6d::Quat random_quat(pose6d::Rng& rng) {
  pose6d::Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-6) q = pose6d::Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return pose6d::canonical_quat(q);
}

inline pose6d::Vec3 random_unit(pose6d::Rng& rng) {
  pose6d::Vec3 v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-6) v = pose6d::Vec3(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

// Small rotation of `deg` degrees about a random axis.
inline pose6d::Quat random_rotation_of(double deg, pose6d::Rng& rng) {
  return pose6d::Quat(Eigen::AngleAxisd(deg * M_PI / 180.0, random_unit(rng)));
}

}  // namespace testutil
