#pragma once

#include <stdexcept>
#include <vector>

#include "lunarloc/detection.hpp"
#include "lunarloc/sensor_sim.hpp"

namespace lunarloc {

struct StereoDetectorConfig {
    int min_valid_pixels = 1000;
    int segment_window = 15;       // px, per-column sliding linear fit
    double lin_tol = 0.3;          // px RMS about the fitted line
    double slope_min = 0.01;       // px residual per px up the image
    double slope_max = 2.0;
    double min_depth_px = 0.5;     // residual swing a far-wall segment must span
    int min_region_px = 50;
    double jump_threshold = 2.0;   // px, near-rim disparity drop; a real crater
                                   // occlusion at working ranges jumps >= ~2.9 px
                                   // while terrain roughness stays below ~2
    int min_contour_px = 8;        // columns
    int contour_row_tol = 3;       // px, chaining across columns
    double pair_overlap = 0.5;     // column overlap fraction for pairing
    ExecMode exec = ExecMode::OpenMP;
};

struct DisparityPlane {
    // Plane A*x + B*y + C*d + D = 0 over (x=column, y=row, d=disparity),
    // normalized with C = -1 so d = A*x + B*y + D.
    double A = 0, B = 0, C = -1, D = 0;
    double residual_rms = 0;

    double predict(double x, double y) const { return A * x + B * y + D; }
};

struct DegenerateDisparity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResidualMap {
    int width = 0, height = 0;
    std::vector<float> residual;  // px; NaN where invalid

    float at(int v, int u) const { return residual[static_cast<size_t>(v) * width + u]; }
    float& at(int v, int u) { return residual[static_cast<size_t>(v) * width + u]; }
    bool valid(int v, int u) const { return std::isfinite(at(v, u)); }
};

struct FarWallRegion {
    std::vector<std::pair<int, int>> pixels;  // (u, v)
    int col_min = 0, col_max = 0;
    int row_min = 0, row_max = 0;             // row_min = top edge (far rim side)
    std::vector<std::pair<int, int>> column_extent;  // per column in [col_min, col_max]: (v_top, v_bottom)
};

struct RimContour {
    std::vector<std::pair<int, int>> pixels;  // (u, v) at the discontinuity
    double mean_jump = 0;                     // px
};

DisparityPlane fit_disparity_plane(const DisparityMap& dmap,
                                   int min_valid_pixels = 1000);

ResidualMap compute_residual_map(const DisparityMap& dmap, const DisparityPlane& plane);

std::vector<FarWallRegion> find_farwall_regions(const ResidualMap& rmap,
                                                const StereoDetectorConfig& cfg);

std::vector<RimContour> find_rim_contours(const ResidualMap& rmap, const DisparityMap& dmap,
                                          const StereoDetectorConfig& cfg);

// Pairs each rim contour with the far-wall region directly above it and
// triangulates near/far rim points into a center and diameter estimate.
std::vector<CraterDetection> pair_and_estimate(const std::vector<FarWallRegion>& regions,
                                               const std::vector<RimContour>& contours,
                                               const DisparityMap& dmap,
                                               const StereoConfig& stereo_cfg,
                                               const CameraModel& camera,
                                               const StereoDetectorConfig& cfg);

// Full pipeline over a disparity map.
std::vector<CraterDetection> detect_stereo(const DisparityMap& dmap,
                                           const StereoConfig& stereo_cfg,
                                           const CameraModel& camera,
                                           const StereoDetectorConfig& cfg);

}  // namespace lunarloc
