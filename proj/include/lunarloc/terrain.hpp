#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lunarloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

struct CraterSpec {
    std::string id;
    Vec2 center_xy{0, 0};
    double diameter = 0;    // m
    double depth = 0;       // m, floor below local datum
    double rim_height = 0;  // m, raised rim above local datum

    double radius() const { return 0.5 * diameter; }
};

// Raster terrain elevation grid, row-major, elevation[r * n_cols + c].
// Cell (r, c) center is at origin_xy + cell_size * (c + 0.5, r + 0.5).
struct HeightField {
    Vec2 origin_xy{0, 0};
    double cell_size = 0;  // m/cell
    int n_rows = 0;
    int n_cols = 0;
    std::vector<float> elevation;

    double width() const { return n_cols * cell_size; }
    double height() const { return n_rows * cell_size; }

    bool contains(double x, double y) const {
        return x >= origin_xy.x() && x <= origin_xy.x() + width() &&
               y >= origin_xy.y() && y <= origin_xy.y() + height();
    }

    float at(int r, int c) const { return elevation[static_cast<size_t>(r) * n_cols + c]; }
    float& at(int r, int c) { return elevation[static_cast<size_t>(r) * n_cols + c]; }

    // Bilinear elevation sample; clamps to the border cells.
    double sample(double x, double y) const;
};

struct RoverPose {
    double x = 0, y = 0;
    double heading = 0;  // rad, 0 = +x
};

struct SceneTruth {
    HeightField heightfield;
    std::vector<CraterSpec> craters;
    RoverPose rover_pose;
    uint64_t seed = 0;
};

struct SceneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Elevation offset of a crater bowl at radial distance r from its center:
// spherical-cap interior reaching -depth at r=0 and +rim_height at the rim,
// then a cubic rim annulus decaying to 0 by r = diameter.
double crater_profile(const CraterSpec& spec, double radial_distance);

struct SceneParams {
    double extent = 60;       // m, square footprint centered on (0,0)
    double cell_size = 0.05;  // m
    double roughness = 0.03;  // m RMS background texture
    RoverPose rover_pose;
};

// Base fractal surface plus crater profiles. Throws SceneError on overlapping
// bowls, craters outside the footprint, or a rover pose inside a bowl.
SceneTruth synthesize_scene(const std::vector<CraterSpec>& craters, const SceneParams& params,
                            uint64_t seed);

}  // namespace lunarloc
