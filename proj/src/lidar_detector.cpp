#include "lunarloc/lidar_detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lunarloc/sensor_sim.hpp"

namespace lunarloc {

namespace {

double wrap_angle(double a) {
    while (a > M_PI) a -= 2 * M_PI;
    while (a <= -M_PI) a += 2 * M_PI;
    return a;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<size_t>(a)] = b;
    }
};

}  // namespace

std::vector<BackwallCluster> find_backwall_clusters(const PointCloud& cloud,
                                                    const NormalField& normals,
                                                    const LidarDetectorConfig& cfg) {
    const double max_nz = std::cos(deg2rad(cfg.min_normal_tilt_deg));
    const double bearing_tol = deg2rad(cfg.toward_sensor_tol_deg);

    std::vector<int> candidates;
    for (int i = 0; i < static_cast<int>(cloud.points.size()); ++i) {
        if (!normals.valid[static_cast<size_t>(i)]) continue;
        const Vec3& n = normals.normals[static_cast<size_t>(i)];
        if (n.z() > max_nz) continue;  // too close to vertical: flat ground
        const Vec3& p = cloud.points[static_cast<size_t>(i)];
        Vec2 to_sensor(cloud.sensor_origin.x() - p.x(), cloud.sensor_origin.y() - p.y());
        if (to_sensor.norm() < 1e-9) continue;
        double d = wrap_angle(std::atan2(n.y(), n.x()) -
                              std::atan2(to_sensor.y(), to_sensor.x()));
        if (std::abs(d) > bearing_tol) continue;
        candidates.push_back(i);
    }
    if (candidates.empty()) return {};

    std::vector<Vec3> cpts;
    cpts.reserve(candidates.size());
    for (int i : candidates) cpts.push_back(cloud.points[static_cast<size_t>(i)]);
    const double r_cluster = cfg.cluster_radius_factor * cfg.voxel_size;
    NeighborGrid grid(cpts, r_cluster);
    UnionFind uf(static_cast<int>(cpts.size()));
    std::vector<int> nbrs;
    for (int i = 0; i < static_cast<int>(cpts.size()); ++i) {
        grid.query(cpts[static_cast<size_t>(i)], nbrs);
        for (int j : nbrs) uf.unite(i, j);
    }
    std::unordered_map<int, BackwallCluster> by_root;
    for (int i = 0; i < static_cast<int>(cpts.size()); ++i) {
        auto& cl = by_root[uf.find(i)];
        cl.members.push_back(candidates[static_cast<size_t>(i)]);
        cl.centroid += cpts[static_cast<size_t>(i)];
    }
    std::vector<BackwallCluster> out;
    for (auto& [root, cl] : by_root) {
        if (static_cast<int>(cl.members.size()) < cfg.min_cluster_size) continue;
        cl.centroid /= static_cast<double>(cl.members.size());
        out.push_back(std::move(cl));
    }
    // Deterministic order: by centroid.
    std::sort(out.begin(), out.end(), [](const BackwallCluster& a, const BackwallCluster& b) {
        return std::tie(a.centroid.x(), a.centroid.y()) < std::tie(b.centroid.x(), b.centroid.y());
    });
    return out;
}

std::optional<CraterHypothesis> estimate_rim_geometry(const VoxelIndex& index,
                                                      const BackwallCluster& cluster,
                                                      const PointCloud& cloud,
                                                      const NormalField& normals,
                                                      const Vec3& sensor_origin,
                                                      const LidarDetectorConfig& cfg) {
    if (cluster.members.empty() || index.empty()) return std::nullopt;
    const double vs = index.voxel_size();
    Vec2 sensor_xy(sensor_origin.x(), sensor_origin.y());
    Vec2 centroid_xy(cluster.centroid.x(), cluster.centroid.y());
    Vec2 u = centroid_xy - sensor_xy;
    const double centroid_dist = u.norm();
    if (centroid_dist < 1e-6) return std::nullopt;
    u /= centroid_dist;

    // Ground level reference: median z of the cloud.
    std::vector<double> zs(cloud.points.size());
    for (size_t i = 0; i < cloud.points.size(); ++i) zs[i] = cloud.points[i].z();
    std::nth_element(zs.begin(), zs.begin() + static_cast<long>(zs.size() / 2), zs.end());
    const double ground_z = zs[zs.size() / 2];

    // Top-down column raycasts walking from the cluster centroid back toward
    // the sensor. The crater near interior is occlusion-shadowed (no data);
    // the first at-ground-level column after that gap is the front rim.
    const double z_top = (index.max_cell(2) + 2) * vs;
    auto column_top = [&](const Vec2& xy) -> std::optional<Vec3> {
        return raycast_first_transition(index, Vec3(xy.x(), xy.y(), z_top), Vec3(0, 0, -1));
    };

    std::optional<Vec3> front_rim;
    bool seen_gap = false;
    std::optional<Vec3> first_ground_col;
    for (double s = centroid_dist; s >= 0.5; s -= vs) {
        Vec2 xy = sensor_xy + s * u;
        auto top = column_top(xy);
        if (!top) {
            seen_gap = true;
            continue;
        }
        if (top->z() >= ground_z - 2.0 * vs) {
            if (seen_gap) {
                front_rim = top;
                break;
            }
            if (!first_ground_col) first_ground_col = top;
        }
    }
    if (!front_rim) front_rim = first_ground_col;  // shallow crater, no shadow
    if (!front_rim) return std::nullopt;

    Vec2 initial_center = 0.5 * (Vec2(front_rim->x(), front_rim->y()) + centroid_xy);

    // Re-filter cluster normals to point toward the initial center estimate.
    const double bearing_tol = deg2rad(cfg.toward_sensor_tol_deg);
    std::optional<Vec3> back_rim;
    double best_s = -1e9;
    int kept = 0;
    for (int i : cluster.members) {
        const Vec3& p = cloud.points[static_cast<size_t>(i)];
        const Vec3& n = normals.normals[static_cast<size_t>(i)];
        Vec2 to_center = initial_center - Vec2(p.x(), p.y());
        if (to_center.norm() < 1e-9) continue;
        double d = wrap_angle(std::atan2(n.y(), n.x()) -
                              std::atan2(to_center.y(), to_center.x()));
        if (std::abs(d) > bearing_tol) continue;
        ++kept;
        double s = u.dot(Vec2(p.x(), p.y()) - sensor_xy);
        if (s > best_s) {
            best_s = s;
            back_rim = p;
        }
    }
    if (!back_rim || kept < std::max(5, static_cast<int>(cluster.members.size()) / 10))
        return std::nullopt;

    CraterHypothesis hyp;
    hyp.front_rim = *front_rim;
    hyp.back_rim = *back_rim;
    Vec2 fr(front_rim->x(), front_rim->y());
    Vec2 br(back_rim->x(), back_rim->y());
    hyp.diameter_est = (br - fr).norm();
    hyp.center_xy = 0.5 * (fr + br);
    if (hyp.diameter_est < 2.0 * vs) return std::nullopt;
    return hyp;
}

ParametricCraterModel build_parametric_model(const LandmarkRecord& landmark,
                                             const LidarDetectorConfig& cfg) {
    ParametricCraterModel model;
    model.landmark_id = landmark.id;
    model.diameter = landmark.diameter;
    model.depth = landmark.depth;

    CraterSpec spec;
    spec.diameter = landmark.diameter;
    spec.depth = landmark.depth;
    // The landmark map records diameter/depth only; assume the rim crest at
    // one tenth of the depth (the terrain synthesizer's convention).
    spec.rim_height = 0.1 * landmark.depth;

    const double pitch = cfg.voxel_size;
    // Observed crest occupancy quantizes half a voxel inward (the dense hits
    // are the back-wall tops just inside the crest circle), so the model ring
    // is shrunk accordingly.
    const double R = 0.5 * landmark.diameter - 0.5 * pitch;
    const int n = static_cast<int>(std::ceil((R + cfg.rim_band) / pitch));
    const double occlusion_half_angle = deg2rad(60.0);
    for (int iy = -n; iy <= n; ++iy) {
        for (int ix = -n; ix <= n; ++ix) {
            const double x = ix * pitch, y = iy * pitch;
            const double r = std::hypot(x, y);
            if (r > R + cfg.rim_band) continue;
            const bool inside = r < R - cfg.rim_band;
            const bool occl_side = x < 0 && std::abs(std::atan2(y, -x)) <= occlusion_half_angle;
            // Dead band inside the rim: the 3x3 column dilation used by the
            // scoring kernel bleeds the crest height into this annulus, so it
            // can neither confirm nor refute a placement. The shadow test is
            // less sensitive to the bleed, so its band is narrower.
            const double dead = (occl_side ? 1.0 : 2.0) * pitch;
            if (inside && r > R - cfg.rim_band - dead) continue;
            ModelSample s;
            if (std::abs(r - R) <= cfg.rim_band) {
                // Rim crest ring, far half only: the near-rim crest often falls
                // between grazing scan lines (ground-projected ray spacing at
                // range grows quadratically), so only the densely observed
                // back-wall crest is required. Pinned at the crest height.
                if (x < 0) continue;
                s.point = Vec3(x, y, spec.rim_height);
                s.zone = ModelZone::Rim;
            } else if (occl_side) {
                // Bowl interior on the sensor side (-X): shadowed by the near
                // rim, so no returns are expected on the surface there.
                s.point = Vec3(x, y, crater_profile(spec, r));
                s.zone = ModelZone::Occlusion;
            } else {
                s.point = Vec3(x, y, crater_profile(spec, r));
                s.zone = ModelZone::Interior;
            }
            model.samples.push_back(s);
        }
    }
    return model;
}

double score_placement(const VoxelIndex& index, const ParametricCraterModel& model,
                       const Vec2& placement_xy, double ground_z, double bearing,
                       const LidarDetectorConfig& cfg) {
    const double cb = std::cos(bearing), sb = std::sin(bearing);
    const double vs = index.voxel_size();
    const int higher_margin_cells =
        std::max(1, static_cast<int>(std::lround(cfg.higher_margin_factor)));
    double score = 0.0;
    for (const auto& s : model.samples) {
        // Canonical +X maps onto the sensor->crater bearing.
        Vec3 p(placement_xy.x() + cb * s.point.x() - sb * s.point.y(),
               placement_xy.y() + sb * s.point.x() + cb * s.point.y(),
               ground_z + s.point.z());
        switch (s.zone) {
            case ModelZone::Occlusion: {
                // Shadowed bowl: no returns expected anywhere near ground
                // level in this column (the near rim blocks the line of sight).
                auto mz = index.column_max_z_near(p);
                int ground_cell = static_cast<int>(std::floor(ground_z / vs));
                if (mz && *mz >= ground_cell - 1) score -= 1.0;
                break;
            }
            case ModelZone::Rim:
                if (!index.occupied_near(p)) score -= 1.0;
                break;
            case ModelZone::Interior: {
                auto mz = index.column_max_z_near(p);
                if (mz) {
                    int sample_cell_z = static_cast<int>(std::floor(p.z() / vs));
                    if (*mz >= sample_cell_z + higher_margin_cells) score -= 1.0;
                }
                break;
            }
        }
    }
    return score;
}

std::optional<CraterDetection> match_candidates(const VoxelIndex& index,
                                                const CraterHypothesis& hypothesis,
                                                const std::vector<LandmarkRecord>& candidates,
                                                const Vec3& sensor_origin, double ground_z,
                                                const LidarDetectorConfig& cfg) {
    if (candidates.empty() || index.empty()) return std::nullopt;
    const double bearing = std::atan2(hypothesis.center_xy.y() - sensor_origin.y(),
                                      hypothesis.center_xy.x() - sensor_origin.x());
    const int half = static_cast<int>(std::lround(cfg.grid_extent / cfg.grid_pitch));
    const int side = 2 * half + 1;

    std::optional<CraterDetection> best;
    double best_norm_score = -1e18;
    for (const auto& cand : candidates) {
        if (std::abs(cand.diameter - hypothesis.diameter_est) > cfg.diam_tol * cand.diameter)
            continue;
        ParametricCraterModel model = build_parametric_model(cand, cfg);
        if (model.samples.empty()) continue;

        std::vector<double> scores(static_cast<size_t>(side) * side);
        parallel_for(cfg.exec, static_cast<int64_t>(scores.size()), [&](int64_t k) {
            int iy = static_cast<int>(k) / side - half;
            int ix = static_cast<int>(k) % side - half;
            Vec2 xy = hypothesis.center_xy + Vec2(ix * cfg.grid_pitch, iy * cfg.grid_pitch);
            scores[static_cast<size_t>(k)] =
                score_placement(index, model, xy, ground_z, bearing, cfg);
        });
        double cand_best = -1e18;
        for (double sc : scores) cand_best = std::max(cand_best, sc);
        // Penalties are integer-valued, so exact ties are common on clean
        // data; take the centroid of the tied plateau instead of letting the
        // scan order pick a corner.
        double cx = 0, cy = 0;
        int ties = 0;
        for (int k = 0; k < static_cast<int>(scores.size()); ++k) {
            if (scores[static_cast<size_t>(k)] == cand_best) {
                cy += (k / side - half) * cfg.grid_pitch;
                cx += (k % side - half) * cfg.grid_pitch;
                ++ties;
            }
        }
        double norm = cand_best / static_cast<double>(model.samples.size());
        if (norm <= cfg.accept_threshold_per_sample) continue;
        if (norm > best_norm_score) {
            best_norm_score = norm;
            CraterDetection det;
            det.center_xy = hypothesis.center_xy + Vec2(cx / ties, cy / ties);
            det.diameter = cand.diameter;
            det.score = norm;
            det.landmark_id = cand.id;
            det.method = DetectionMethod::Lidar;
            best = det;
        }
    }
    return best;
}

std::vector<CraterDetection> detect_lidar(const PointCloud& cloud, const RoverState& prior,
                                          const LandmarkDb& db, const LidarDetectorConfig& cfg) {
    AlignResult aligned = fit_ground_plane_and_align(cloud);
    NormalField normals = estimate_normals(aligned.cloud, cfg.patch_radius, cfg.exec);
    std::vector<BackwallCluster> clusters = find_backwall_clusters(aligned.cloud, normals, cfg);
    if (clusters.empty()) return {};

    VoxelIndex index = voxelize(aligned.cloud, cfg.voxel_size);
    std::vector<double> zs(aligned.cloud.points.size());
    for (size_t i = 0; i < zs.size(); ++i) zs[i] = aligned.cloud.points[i].z();
    std::nth_element(zs.begin(), zs.begin() + static_cast<long>(zs.size() / 2), zs.end());
    const double ground_z = zs[zs.size() / 2];

    const double query_radius = prior.three_sigma() + cfg.sensing_radius;
    std::vector<LandmarkRecord> candidates = db.query_radius(prior.position, query_radius);

    std::vector<CraterDetection> out;
    for (const auto& cluster : clusters) {
        auto hyp = estimate_rim_geometry(index, cluster, aligned.cloud, normals,
                                         aligned.cloud.sensor_origin, cfg);
        if (!hyp) continue;
        auto det = match_candidates(index, *hyp, candidates, aligned.cloud.sensor_origin,
                                    ground_z, cfg);
        if (det) out.push_back(*det);
    }
    // Keep the best-scoring detection per landmark.
    std::sort(out.begin(), out.end(), [](const CraterDetection& a, const CraterDetection& b) {
        if (a.landmark_id != b.landmark_id) return a.landmark_id < b.landmark_id;
        return a.score > b.score;
    });
    std::vector<CraterDetection> dedup;
    for (const auto& d : out)
        if (dedup.empty() || dedup.back().landmark_id != d.landmark_id) dedup.push_back(d);
    return dedup;
}

}  // namespace lunarloc
