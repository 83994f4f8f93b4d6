#pragma once

#include <optional>
#include <vector>

#include "lunarloc/detection.hpp"
#include "lunarloc/landmark_db.hpp"
#include "lunarloc/localizer_types.hpp"
#include "lunarloc/pointcloud.hpp"

namespace lunarloc {

struct LidarDetectorConfig {
    double patch_radius = 0.3;      // m, normal estimation
    double voxel_size = 0.25;       // m
    double toward_sensor_tol_deg = 60.0;  // normal bearing vs point->sensor bearing
    double min_normal_tilt_deg = 15.0;    // off vertical
    double cluster_radius_factor = 3.0;   // * voxel_size
    int min_cluster_size = 20;
    double rim_band = 0.25;         // m, rim zone half-width of the model
    double higher_margin_factor = 3.0;    // * voxel_size, "higher than the point"
    double grid_extent = 2.0;       // m, placement search half-extent
    double grid_pitch = 0.25;       // m
    double accept_threshold_per_sample = -0.35;
    double diam_tol = 0.30;         // relative diameter similarity gate
    double sensing_radius = 25.0;   // m, candidate query reach beyond prior 3-sigma
    ExecMode exec = ExecMode::OpenMP;
};

struct BackwallCluster {
    std::vector<int> members;
    Vec3 centroid{0, 0, 0};
};

struct CraterHypothesis {
    Vec3 front_rim{0, 0, 0};
    Vec3 back_rim{0, 0, 0};
    Vec2 center_xy{0, 0};
    double diameter_est = 0;
};

enum class ModelZone { Occlusion, Rim, Interior };

struct ModelSample {
    Vec3 point;  // canonical frame: crater center at origin, sensor along -X
    ModelZone zone;
};

struct ParametricCraterModel {
    std::string landmark_id;
    double diameter = 0;
    double depth = 0;
    std::vector<ModelSample> samples;
};

std::vector<BackwallCluster> find_backwall_clusters(const PointCloud& cloud,
                                                    const NormalField& normals,
                                                    const LidarDetectorConfig& cfg);

// Returns nullopt when no front rim transition exists or the back-rim
// re-filter empties the cluster (convex false positive).
std::optional<CraterHypothesis> estimate_rim_geometry(const VoxelIndex& index,
                                                      const BackwallCluster& cluster,
                                                      const PointCloud& cloud,
                                                      const NormalField& normals,
                                                      const Vec3& sensor_origin,
                                                      const LidarDetectorConfig& cfg);

ParametricCraterModel build_parametric_model(const LandmarkRecord& landmark,
                                             const LidarDetectorConfig& cfg);

// Sum of per-sample penalties (all <= 0, maximum score 0) for the model placed
// with its center at placement_xy on ground datum ground_z, sensor-facing
// direction given by bearing (radians, sensor lies opposite the bearing).
double score_placement(const VoxelIndex& index, const ParametricCraterModel& model,
                       const Vec2& placement_xy, double ground_z, double bearing,
                       const LidarDetectorConfig& cfg);

std::optional<CraterDetection> match_candidates(const VoxelIndex& index,
                                                const CraterHypothesis& hypothesis,
                                                const std::vector<LandmarkRecord>& candidates,
                                                const Vec3& sensor_origin, double ground_z,
                                                const LidarDetectorConfig& cfg);

// Full pipeline: align, normals, clusters, hypotheses, candidate query within
// the prior 3-sigma plus sensing radius, parametric matching.
std::vector<CraterDetection> detect_lidar(const PointCloud& cloud, const RoverState& prior,
                                          const LandmarkDb& db, const LidarDetectorConfig& cfg);

}  // namespace lunarloc
