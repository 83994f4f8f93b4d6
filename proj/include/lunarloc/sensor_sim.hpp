#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lunarloc/parallel.hpp"
#include "lunarloc/pointcloud.hpp"
#include "lunarloc/terrain.hpp"

namespace lunarloc {

inline double deg2rad(double d) { return d * M_PI / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / M_PI; }

struct LidarConfig {
    double vertical_fov_deg = 75.0;
    double horizontal_fov_deg = 360.0;
    double vertical_res_deg = 0.333;
    double horizontal_res_deg = 0.333;
    double height = 1.5;        // m above terrain at the rover
    double tilt_deg = 23.0;     // scan center pitched down
    double range_noise_sigma = 0.02;  // m
};

struct StereoConfig {
    int image_width = 1024;
    int image_height = 1024;
    double hfov_deg = 90.0;
    double baseline = 0.30;     // m
    double camera_height = 1.5; // m above terrain at the rover
    double tilt_deg = 20.0;     // optical axis pitched down
    double disparity_noise_sigma = 0.25;  // px
    double dropout_probability = 0.5;     // at range discontinuities
    double discontinuity_range = 0.5;     // m neighborhood range spread

    double focal_px() const {
        return 0.5 * image_width / std::tan(0.5 * deg2rad(hfov_deg));
    }
};

struct DisparityMap {
    int width = 0, height = 0;
    std::vector<float> disparity;  // px; NaN = invalid

    float at(int v, int u) const { return disparity[static_cast<size_t>(v) * width + u]; }
    float& at(int v, int u) { return disparity[static_cast<size_t>(v) * width + u]; }
    bool valid(int v, int u) const { return std::isfinite(at(v, u)); }
};

// Ray-march intersection of a ray with the heightfield. Step is half the grid
// cell with bisection refinement at the sign change. Returns ray parameter t.
std::optional<double> raymarch_heightfield(const HeightField& hf, const Vec3& origin,
                                           const Vec3& dir, double t0 = 0.0,
                                           double max_range = 1e4);

// One ray per (azimuth, elevation) grid sample; site-frame output. Noise
// perturbs hit ranges only, so the occlusion mask is seed-independent.
PointCloud simulate_lidar(const SceneTruth& scene, const LidarConfig& cfg, uint64_t seed,
                          ExecMode mode = ExecMode::OpenMP);

struct StereoSimResult {
    DisparityMap disparity;
    PointCloud cloud;  // triangulated from the noisy disparities, site frame
    Vec3 camera_position;
};

StereoSimResult simulate_stereo(const SceneTruth& scene, const StereoConfig& cfg, uint64_t seed,
                                ExecMode mode = ExecMode::OpenMP);

// Camera geometry shared by the simulator and the stereo detector.
struct CameraModel {
    Vec3 position;
    Eigen::Matrix3d cam_to_site;  // camera frame: x right, y down, z forward
    double focal_px;
    double cx, cy;

    static CameraModel from_config(const StereoConfig& cfg, const RoverPose& pose,
                                   double ground_z);
    Vec3 pixel_ray_site(double u, double v) const;  // unit direction, site frame
    // 3D point for pixel (u,v) with disparity d, given baseline.
    Vec3 triangulate(double u, double v, double d, double baseline) const;
};

// DisparityMap file format: float32 raster + JSON sidecar with dims and the
// camera config; invalid sentinel is NaN.
void write_disparity(const std::string& raster_path, const DisparityMap& dmap,
                     const StereoConfig& cfg, const RoverPose& pose, double ground_z);
struct DisparityFile {
    DisparityMap dmap;
    StereoConfig cfg;
    RoverPose pose;
    double ground_z = 0;
};
DisparityFile read_disparity(const std::string& raster_path);

}  // namespace lunarloc
