#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lunarloc/parallel.hpp"
#include "lunarloc/terrain.hpp"

namespace lunarloc {

enum class Frame { Sensor, Site };

struct PointCloud {
    std::vector<Vec3> points;
    Frame frame = Frame::Sensor;
    Vec3 sensor_origin{0, 0, 0};

    size_t size() const { return points.size(); }
};

struct NormalField {
    std::vector<Vec3> normals;
    std::vector<uint8_t> valid;
};

struct DegenerateCloud : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Cell {
    int32_t x, y, z;
    bool operator==(const Cell&) const = default;
};

struct CellHash {
    size_t operator()(const Cell& c) const {
        uint64_t k = (static_cast<uint64_t>(static_cast<uint32_t>(c.x)) << 42) ^
                     (static_cast<uint64_t>(static_cast<uint32_t>(c.y)) << 21) ^
                     static_cast<uint32_t>(c.z);
        k *= 0x9e3779b97f4a7c15ull;
        return k ^ (k >> 29);
    }
};

// Exact floor-quantized occupancy of a point cloud, with derived dense masks
// used by the model-scoring kernel (neighbor-occupied and per-column max z).
class VoxelIndex {
public:
    VoxelIndex() = default;
    VoxelIndex(const PointCloud& cloud, double voxel_size);

    double voxel_size() const { return voxel_size_; }
    bool empty() const { return occupied_.empty(); }
    size_t occupied_count() const { return occupied_.size(); }

    Cell cell_of(const Vec3& p) const {
        return {static_cast<int32_t>(std::floor(p.x() / voxel_size_)),
                static_cast<int32_t>(std::floor(p.y() / voxel_size_)),
                static_cast<int32_t>(std::floor(p.z() / voxel_size_))};
    }
    Vec3 cell_center(const Cell& c) const {
        return {(c.x + 0.5) * voxel_size_, (c.y + 0.5) * voxel_size_, (c.z + 0.5) * voxel_size_};
    }

    bool occupied(const Cell& c) const { return occupied_.contains(c); }
    bool in_bounds(const Cell& c) const {
        return c.x >= min_[0] && c.x <= max_[0] && c.y >= min_[1] && c.y <= max_[1] &&
               c.z >= min_[2] && c.z <= max_[2];
    }

    // Any occupied cell within the 3x3x3 neighborhood of the point's cell.
    bool occupied_near(const Vec3& p) const;
    // Highest occupied cell z index over the 3x3 column neighborhood, or none.
    std::optional<int32_t> column_max_z_near(const Vec3& p) const;

    const std::unordered_set<Cell, CellHash>& cells() const { return occupied_; }
    int32_t min_cell(int axis) const { return min_[axis]; }
    int32_t max_cell(int axis) const { return max_[axis]; }

private:
    size_t column_index(int32_t cx, int32_t cy) const {
        return static_cast<size_t>(cy - min_[1]) * nx_ + static_cast<size_t>(cx - min_[0]);
    }

    double voxel_size_ = 0;
    std::unordered_set<Cell, CellHash> occupied_;
    int32_t min_[3] = {0, 0, 0};
    int32_t max_[3] = {-1, -1, -1};
    size_t nx_ = 0, ny_ = 0;
    std::vector<uint8_t> col_near_occupied_;  // per xy column: any occupied cell in 3x3 nbhd
    std::vector<int32_t> col_max_z_;          // per xy column: max occupied z (INT32_MIN = none)
    std::vector<int32_t> col_near_max_z_;     // 3x3-dilated column max z
};

// Fixed-radius neighbor queries on a uniform grid hash.
class NeighborGrid {
public:
    NeighborGrid(const std::vector<Vec3>& points, double radius);
    // Indices of points within radius of p (includes p itself if present).
    // Collection stops after max_results hits (fixed deterministic scan order),
    // which keeps dense neighborhoods cheap.
    void query(const Vec3& p, std::vector<int>& out, int max_results = INT32_MAX) const;

private:
    double cell_ = 0;
    const std::vector<Vec3>& points_;
    std::unordered_map<Cell, std::vector<int>, CellHash> grid_;
};

struct PlaneFit {
    Vec3 normal{0, 0, 1};   // unit
    double offset = 0;      // plane: normal . p = offset
    double inlier_fraction = 1;
};

// Robust (iteratively reweighted, 3 rounds) plane fit.
PlaneFit fit_plane_robust(const std::vector<Vec3>& points);

struct AlignResult {
    PointCloud cloud;
    Eigen::Matrix3d rotation;  // applied rotation, det +1
};

// Rotates the cloud so the robustly fitted ground plane normal is +Z.
// Throws DegenerateCloud if fewer than 100 points or inlier fraction < 30%.
AlignResult fit_ground_plane_and_align(const PointCloud& cloud);

NormalField estimate_normals(const PointCloud& cloud, double patch_radius,
                             ExecMode mode = ExecMode::OpenMP);

inline VoxelIndex voxelize(const PointCloud& cloud, double voxel_size) {
    return VoxelIndex(cloud, voxel_size);
}

// Integer cell traversal from start along direction; returns the center of the
// first occupied cell found after at least one unoccupied cell, or none when
// the ray exits the index bounds.
std::optional<Vec3> raycast_first_transition(const VoxelIndex& index, const Vec3& start,
                                             const Vec3& direction);

}  // namespace lunarloc
