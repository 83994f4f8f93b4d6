#include "lunarloc/pointcloud.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

namespace lunarloc {

VoxelIndex::VoxelIndex(const PointCloud& cloud, double voxel_size) : voxel_size_(voxel_size) {
    if (voxel_size <= 0) throw std::invalid_argument("voxel_size must be > 0");
    if (cloud.points.empty()) return;
    min_[0] = min_[1] = min_[2] = std::numeric_limits<int32_t>::max();
    max_[0] = max_[1] = max_[2] = std::numeric_limits<int32_t>::min();
    occupied_.reserve(cloud.points.size());
    for (const auto& p : cloud.points) {
        Cell c = cell_of(p);
        occupied_.insert(c);
        min_[0] = std::min(min_[0], c.x); max_[0] = std::max(max_[0], c.x);
        min_[1] = std::min(min_[1], c.y); max_[1] = std::max(max_[1], c.y);
        min_[2] = std::min(min_[2], c.z); max_[2] = std::max(max_[2], c.z);
    }
    nx_ = static_cast<size_t>(max_[0] - min_[0] + 1);
    ny_ = static_cast<size_t>(max_[1] - min_[1] + 1);
    const size_t ncols = nx_ * ny_;
    col_max_z_.assign(ncols, std::numeric_limits<int32_t>::min());
    for (const auto& c : occupied_) {
        auto& mz = col_max_z_[column_index(c.x, c.y)];
        mz = std::max(mz, c.z);
    }
    col_near_occupied_.assign(ncols, 0);
    col_near_max_z_.assign(ncols, std::numeric_limits<int32_t>::min());
    for (int32_t y = min_[1]; y <= max_[1]; ++y) {
        for (int32_t x = min_[0]; x <= max_[0]; ++x) {
            int32_t mz = std::numeric_limits<int32_t>::min();
            bool any = false;
            for (int32_t dy = -1; dy <= 1; ++dy) {
                for (int32_t dx = -1; dx <= 1; ++dx) {
                    int32_t xx = x + dx, yy = y + dy;
                    if (xx < min_[0] || xx > max_[0] || yy < min_[1] || yy > max_[1]) continue;
                    int32_t m = col_max_z_[column_index(xx, yy)];
                    if (m != std::numeric_limits<int32_t>::min()) {
                        any = true;
                        mz = std::max(mz, m);
                    }
                }
            }
            size_t i = column_index(x, y);
            col_near_occupied_[i] = any ? 1 : 0;
            col_near_max_z_[i] = mz;
        }
    }
}

bool VoxelIndex::occupied_near(const Vec3& p) const {
    if (occupied_.empty()) return false;
    Cell c = cell_of(p);
    if (c.x < min_[0] - 1 || c.x > max_[0] + 1 || c.y < min_[1] - 1 || c.y > max_[1] + 1)
        return false;
    // Quick reject via the dilated column mask.
    int32_t qx = std::clamp(c.x, min_[0], max_[0]);
    int32_t qy = std::clamp(c.y, min_[1], max_[1]);
    if (std::abs(qx - c.x) <= 1 && std::abs(qy - c.y) <= 1 &&
        !col_near_occupied_[column_index(qx, qy)])
        return false;
    for (int32_t dz = -1; dz <= 1; ++dz)
        for (int32_t dy = -1; dy <= 1; ++dy)
            for (int32_t dx = -1; dx <= 1; ++dx)
                if (occupied_.contains({c.x + dx, c.y + dy, c.z + dz})) return true;
    return false;
}

std::optional<int32_t> VoxelIndex::column_max_z_near(const Vec3& p) const {
    if (occupied_.empty()) return std::nullopt;
    Cell c = cell_of(p);
    if (c.x < min_[0] - 1 || c.x > max_[0] + 1 || c.y < min_[1] - 1 || c.y > max_[1] + 1)
        return std::nullopt;
    int32_t qx = std::clamp(c.x, min_[0], max_[0]);
    int32_t qy = std::clamp(c.y, min_[1], max_[1]);
    if (std::abs(qx - c.x) > 1 || std::abs(qy - c.y) > 1) return std::nullopt;
    int32_t m = col_near_max_z_[column_index(qx, qy)];
    if (m == std::numeric_limits<int32_t>::min()) return std::nullopt;
    return m;
}

NeighborGrid::NeighborGrid(const std::vector<Vec3>& points, double radius)
    : cell_(radius), points_(points) {
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        const Vec3& p = points[static_cast<size_t>(i)];
        Cell c{static_cast<int32_t>(std::floor(p.x() / cell_)),
               static_cast<int32_t>(std::floor(p.y() / cell_)),
               static_cast<int32_t>(std::floor(p.z() / cell_))};
        grid_[c].push_back(i);
    }
}

void NeighborGrid::query(const Vec3& p, std::vector<int>& out, int max_results) const {
    out.clear();
    Cell c{static_cast<int32_t>(std::floor(p.x() / cell_)),
           static_cast<int32_t>(std::floor(p.y() / cell_)),
           static_cast<int32_t>(std::floor(p.z() / cell_))};
    const double r2 = cell_ * cell_;
    // The center cell first so the cap favors the tightest neighborhood.
    for (int32_t k = 0; k < 27; ++k) {
        const int32_t ordered = (k == 0) ? 13 : (k <= 13 ? k - 1 : k);
        const int32_t dx = ordered % 3 - 1, dy = (ordered / 3) % 3 - 1, dz = ordered / 9 - 1;
        auto it = grid_.find({c.x + dx, c.y + dy, c.z + dz});
        if (it == grid_.end()) continue;
        for (int i : it->second) {
            if ((points_[static_cast<size_t>(i)] - p).squaredNorm() <= r2) {
                out.push_back(i);
                if (static_cast<int>(out.size()) >= max_results) return;
            }
        }
    }
}

PlaneFit fit_plane_robust(const std::vector<Vec3>& points) {
    const size_t n = points.size();
    std::vector<double> w(n, 1.0);
    Vec3 normal(0, 0, 1);
    double offset = 0;
    double scale = 0;
    for (int round = 0; round < 4; ++round) {  // initial LSQ + 3 reweighted rounds
        double wsum = 0;
        Vec3 centroid = Vec3::Zero();
        for (size_t i = 0; i < n; ++i) {
            centroid += w[i] * points[i];
            wsum += w[i];
        }
        centroid /= wsum;
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (size_t i = 0; i < n; ++i) {
            Vec3 d = points[i] - centroid;
            cov += w[i] * d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        normal = es.eigenvectors().col(0);
        if (normal.z() < 0) normal = -normal;
        offset = normal.dot(centroid);

        // Residual scale from the median absolute residual.
        std::vector<double> absres(n);
        for (size_t i = 0; i < n; ++i) absres[i] = std::abs(normal.dot(points[i]) - offset);
        std::vector<double> tmp = absres;
        std::nth_element(tmp.begin(), tmp.begin() + static_cast<long>(n / 2), tmp.end());
        scale = 1.4826 * tmp[n / 2];
        double s = std::max(scale, 1e-6);
        for (size_t i = 0; i < n; ++i) {
            double r = absres[i] / s;
            w[i] = 1.0 / (1.0 + r * r);
        }
    }
    PlaneFit fit;
    fit.normal = normal;
    fit.offset = offset;
    const double inlier_tol = std::max(3.0 * scale, 0.02);
    size_t inliers = 0;
    for (size_t i = 0; i < n; ++i)
        if (std::abs(normal.dot(points[i]) - offset) <= inlier_tol) ++inliers;
    fit.inlier_fraction = static_cast<double>(inliers) / static_cast<double>(n);
    return fit;
}

AlignResult fit_ground_plane_and_align(const PointCloud& cloud) {
    if (cloud.points.size() < 100) throw DegenerateCloud("ground plane fit needs >= 100 points");
    PlaneFit fit = fit_plane_robust(cloud.points);
    if (fit.inlier_fraction < 0.30)
        throw DegenerateCloud("ground plane inlier fraction below 30%");

    // Minimal rotation taking the plane normal to +Z.
    Eigen::Matrix3d R =
        Eigen::Quaterniond::FromTwoVectors(fit.normal, Vec3(0, 0, 1)).toRotationMatrix();
    AlignResult out;
    out.rotation = R;
    out.cloud.frame = cloud.frame;
    out.cloud.sensor_origin = R * cloud.sensor_origin;
    out.cloud.points.resize(cloud.points.size());
    for (size_t i = 0; i < cloud.points.size(); ++i) out.cloud.points[i] = R * cloud.points[i];
    return out;
}

NormalField estimate_normals(const PointCloud& cloud, double patch_radius, ExecMode mode) {
    if (patch_radius <= 0) throw std::invalid_argument("patch_radius must be > 0");
    const auto n = static_cast<int64_t>(cloud.points.size());
    NormalField field;
    field.normals.assign(cloud.points.size(), Vec3(0, 0, 0));
    field.valid.assign(cloud.points.size(), 0);
    NeighborGrid grid(cloud.points, patch_radius);

    parallel_for(mode, n, [&](int64_t i) {
        thread_local std::vector<int> nbrs;
        const Vec3& p = cloud.points[static_cast<size_t>(i)];
        grid.query(p, nbrs, 64);
        // The point itself plus at least 4 neighbors (a 5-point cross is the
        // sparsest patch a distant wall yields at the scan resolution).
        if (static_cast<int>(nbrs.size()) < 5) return;
        Vec3 centroid = Vec3::Zero();
        for (int j : nbrs) centroid += cloud.points[static_cast<size_t>(j)];
        centroid /= static_cast<double>(nbrs.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : nbrs) {
            Vec3 d = cloud.points[static_cast<size_t>(j)] - centroid;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        // Quasi-collinear neighborhood: distant ground scan rings are farther
        // apart than the patch radius, leaving a 1-D arc whose normal is
        // arbitrary in the plane across it.
        if (es.eigenvalues()(1) < 1e-12 || es.eigenvalues()(1) < 1e-3 * es.eigenvalues()(2)) return;
        Vec3 normal = es.eigenvectors().col(0);
        if (normal.dot(cloud.sensor_origin - p) < 0) normal = -normal;
        field.normals[static_cast<size_t>(i)] = normal;
        field.valid[static_cast<size_t>(i)] = 1;
    });
    return field;
}

std::optional<Vec3> raycast_first_transition(const VoxelIndex& index, const Vec3& start,
                                             const Vec3& direction) {
    if (index.empty()) return std::nullopt;
    const double vs = index.voxel_size();
    Cell c = index.cell_of(start);

    // Amanatides & Woo integer traversal.
    int32_t step[3];
    double t_max[3], t_delta[3];
    const double d[3] = {direction.x(), direction.y(), direction.z()};
    const double s[3] = {start.x(), start.y(), start.z()};
    int32_t cc[3] = {c.x, c.y, c.z};
    for (int a = 0; a < 3; ++a) {
        if (d[a] > 1e-12) {
            step[a] = 1;
            t_max[a] = ((cc[a] + 1) * vs - s[a]) / d[a];
            t_delta[a] = vs / d[a];
        } else if (d[a] < -1e-12) {
            step[a] = -1;
            t_max[a] = (cc[a] * vs - s[a]) / d[a];
            t_delta[a] = -vs / d[a];
        } else {
            step[a] = 0;
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }

    bool seen_unoccupied = false;
    // Allow entry from outside the bounds; give up once the ray has left them
    // on the far side along every advancing axis.
    for (int iter = 0; iter < (1 << 22); ++iter) {
        Cell cur{cc[0], cc[1], cc[2]};
        bool inside = index.in_bounds(cur);
        if (inside && index.occupied(cur)) {
            if (seen_unoccupied) return index.cell_center(cur);
        } else {
            seen_unoccupied = true;
        }
        // Exit test: outside bounds and moving away on some axis.
        if (!inside) {
            bool leaving = false;
            for (int a = 0; a < 3; ++a) {
                if (step[a] > 0 && cc[a] > index.max_cell(a)) leaving = true;
                if (step[a] < 0 && cc[a] < index.min_cell(a)) leaving = true;
            }
            if (leaving && iter > 0) return std::nullopt;
        }
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        if (std::isinf(t_max[axis])) return std::nullopt;
        cc[axis] += step[axis];
        t_max[axis] += t_delta[axis];
    }
    return std::nullopt;
}

}  // namespace lunarloc
