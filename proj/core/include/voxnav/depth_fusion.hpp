#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxnav/geometry.hpp"

namespace voxnav {

// Relative depth image: positive values in an arbitrary, possibly warped
// unit produced by the depth estimator. Non-positive or non-finite entries
// carry no information.
struct RelativeDepth {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, data[v * width + u]

  float at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
};

// Millimeter depth image; 0 marks an invalid pixel.
struct DepthMM {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  std::uint16_t& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
};

// Pinhole intrinsics. A pixel (u, v) at depth d meters back-projects to
// d * ((u - cx)/fx, (v - cy)/fy, 1) in the camera frame (x right, y down,
// z forward along the optical axis).
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct FusionConfig {
  double min_depth_mm = 300.0;    // trusted sparse-depth window
  double max_depth_mm = 10000.0;
  int max_samples = 100000;       // cap on the regression sample count
};

enum class FitStatus { Ok, InsufficientSamples, DegenerateDesign };

// Quadratic map from relative depth d to inverse metric depth:
//   1 / depth_mm = c2 d^2 + c1 d + c0.
// Fitting in inverse depth keeps the model linear in the coefficients and
// weights nearby structure (which matters for collision avoidance) more
// strongly than distant structure.
struct ScaleFit {
  FitStatus status = FitStatus::InsufficientSamples;
  Eigen::Vector3d coeffs = Eigen::Vector3d::Zero();          // (c2, c1, c0)
  Eigen::Vector3d standard_errors = Eigen::Vector3d::Zero(); // same order
  int samples_used = 0;

  bool ok() const { return status == FitStatus::Ok; }
  double inverse_depth(double relative) const {
    return (coeffs[0] * relative + coeffs[1]) * relative + coeffs[2];
  }
};

// Least-squares fit of the inverse-depth quadratic against sparse metric
// samples. Uses pixels where the sparse depth lies inside the trusted
// window and the relative depth is positive and finite; if more than
// config.max_samples qualify, a deterministic stride subsample is used.
// Status is InsufficientSamples below 3 usable pixels and DegenerateDesign
// when the design matrix is rank deficient (e.g. constant relative depth).
ScaleFit fit_scale(const RelativeDepth& relative, const DepthMM& sparse,
                   const FusionConfig& config = {});

// Applies a fit to every pixel of a relative image. Pixels whose predicted
// depth falls outside [min_depth_mm, max_depth_mm] (including non-positive
// inverse depth) come out invalid.
DepthMM complete_depth(const RelativeDepth& relative, const ScaleFit& fit,
                       const FusionConfig& config = {});

// Back-projects valid pixels to world-frame points (meters).
std::vector<Vec3> depth_to_points(const DepthMM& depth, const Intrinsics& intrinsics,
                                  const Pose& camera_pose);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples per Netpbm).
void save_pgm16(const DepthMM& image, const std::string& path);
DepthMM load_pgm16(const std::string& path);

// Raw float image: "DPTH" magic, u32 width, u32 height, f32 samples, all
// little-endian.
void save_relative_depth(const RelativeDepth& image, const std::string& path);
RelativeDepth load_relative_depth(const std::string& path);

}  // namespace voxnav
