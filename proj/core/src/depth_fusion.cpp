#include "voxnav/depth_fusion.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxnav {
namespace {

void require_same_shape(const RelativeDepth& a, const DepthMM& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("depth image shapes differ");
  if (a.data.size() != static_cast<std::size_t>(a.width) * a.height ||
      b.data.size() != static_cast<std::size_t>(b.width) * b.height)
    throw std::invalid_argument("depth image buffer does not match its shape");
}

}  // namespace

ScaleFit fit_scale(const RelativeDepth& relative, const DepthMM& sparse,
                   const FusionConfig& config) {
  require_same_shape(relative, sparse);
  ScaleFit fit;

  std::vector<std::size_t> usable;
  usable.reserve(sparse.data.size());
  for (std::size_t i = 0; i < sparse.data.size(); ++i) {
    const double d_mm = sparse.data[i];
    const float r = relative.data[i];
    if (d_mm < config.min_depth_mm || d_mm > config.max_depth_mm) continue;
    if (!std::isfinite(r) || r <= 0.0f) continue;
    usable.push_back(i);
  }
  if (usable.size() > static_cast<std::size_t>(config.max_samples) && config.max_samples > 0) {
    const std::size_t stride =
        (usable.size() + config.max_samples - 1) / config.max_samples;
    std::vector<std::size_t> thinned;
    thinned.reserve(usable.size() / stride + 1);
    for (std::size_t k = 0; k < usable.size(); k += stride) thinned.push_back(usable[k]);
    usable.swap(thinned);
  }

  const int n = static_cast<int>(usable.size());
  fit.samples_used = n;
  if (n < 3) {
    fit.status = FitStatus::InsufficientSamples;
    return fit;
  }

  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd target(n);
  for (int row = 0; row < n; ++row) {
    const double r = relative.data[usable[row]];
    design(row, 0) = r * r;
    design(row, 1) = r;
    design(row, 2) = 1.0;
    target[row] = 1.0 / static_cast<double>(sparse.data[usable[row]]);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) {
    fit.status = FitStatus::DegenerateDesign;
    return fit;
  }
  fit.coeffs = qr.solve(target);
  fit.status = FitStatus::Ok;

  // Standard errors from the residual variance and the unscaled covariance
  // diag((X^T X)^-1); zero when the fit is exactly determined.
  const double dof = n - 3;
  if (dof > 0) {
    const double rss = (design * fit.coeffs - target).squaredNorm();
    const double sigma2 = rss / dof;
    const Eigen::Matrix3d xtx = design.transpose() * design;
    const Eigen::Matrix3d cov = xtx.inverse();
    for (int i = 0; i < 3; ++i)
      fit.standard_errors[i] = std::sqrt(std::max(sigma2 * cov(i, i), 0.0));
  }
  return fit;
}

DepthMM complete_depth(const RelativeDepth& relative, const ScaleFit& fit,
                       const FusionConfig& config) {
  DepthMM out;
  out.width = relative.width;
  out.height = relative.height;
  out.data.assign(relative.data.size(), 0);
  if (!fit.ok()) return out;

  const double q_min = 1.0 / config.max_depth_mm;  // inverse-depth window
  const double q_max = 1.0 / config.min_depth_mm;
  for (std::size_t i = 0; i < relative.data.size(); ++i) {
    const float r = relative.data[i];
    if (!std::isfinite(r) || r <= 0.0f) continue;
    const double q = fit.inverse_depth(r);
    if (q < q_min || q > q_max) continue;
    const double d_mm = 1.0 / q;
    out.data[i] = static_cast<std::uint16_t>(
        std::min(std::max(std::lround(d_mm), 1L), 65535L));
  }
  return out;
}

std::vector<Vec3> depth_to_points(const DepthMM& depth, const Intrinsics& intrinsics,
                                  const Pose& camera_pose) {
  std::vector<Vec3> points;
  points.reserve(depth.data.size() / 4);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::uint16_t d = depth.at(u, v);
      if (d == 0) continue;
      const double z = d * 1e-3;
      const Vec3 cam(z * (u - intrinsics.cx) / intrinsics.fx,
                     z * (v - intrinsics.cy) / intrinsics.fy, z);
      points.push_back(camera_pose.apply(cam));
    }
  }
  return points;
}

void save_pgm16(const DepthMM& image, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "P5\n" << image.width << " " << image.height << "\n65535\n";
  for (std::uint16_t sample : image.data) {
    const unsigned char bytes[2] = {static_cast<unsigned char>(sample >> 8),
                                    static_cast<unsigned char>(sample & 0xff)};
    os.write(reinterpret_cast<const char*>(bytes), 2);
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

DepthMM load_pgm16(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  is >> magic >> width >> height >> maxval;
  if (!is || magic != "P5" || width <= 0 || height <= 0 || maxval != 65535)
    throw std::runtime_error(path + ": not a 16-bit binary PGM");
  is.get();  // single whitespace after the header
  DepthMM image;
  image.width = width;
  image.height = height;
  image.data.resize(static_cast<std::size_t>(width) * height);
  for (std::uint16_t& sample : image.data) {
    unsigned char bytes[2];
    if (!is.read(reinterpret_cast<char*>(bytes), 2))
      throw std::runtime_error(path + ": truncated PGM payload");
    sample = static_cast<std::uint16_t>((bytes[0] << 8) | bytes[1]);
  }
  return image;
}

namespace {

constexpr char kDepthMagic[4] = {'D', 'P', 'T', 'H'};

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

}  // namespace

void save_relative_depth(const RelativeDepth& image, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kDepthMagic, 4);
  write_le(os, static_cast<std::uint32_t>(image.width));
  write_le(os, static_cast<std::uint32_t>(image.height));
  for (float sample : image.data) write_le(os, sample);
  if (!os) throw std::runtime_error("failed writing " + path);
}

RelativeDepth load_relative_depth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kDepthMagic, 4) != 0)
    throw std::runtime_error(path + ": not a relative depth file");
  std::uint32_t width = 0, height = 0;
  if (!read_le(is, width) || !read_le(is, height) || width == 0 || height == 0)
    throw std::runtime_error(path + ": malformed relative depth header");
  RelativeDepth image;
  image.width = static_cast<int>(width);
  image.height = static_cast<int>(height);
  image.data.resize(static_cast<std::size_t>(width) * height);
  for (float& sample : image.data) {
    if (!read_le(is, sample))
      throw std::runtime_error(path + ": truncated relative depth payload");
  }
  return image;
}

}  // namespace voxnav
