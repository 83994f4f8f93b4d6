#include "lunarloc/sensor_sim.hpp"

#include <fstream>
#include <json.hpp>

#include "lunarloc/io.hpp"
#include "lunarloc/rng.hpp"

namespace lunarloc {

using nlohmann::json;

std::optional<double> raymarch_heightfield(const HeightField& hf, const Vec3& origin,
                                           const Vec3& dir, double t0, double max_range) {
    const double step = 0.5 * hf.cell_size;
    const double zmax = [&] {
        // Rays above the terrain ceiling and ascending can never hit.
        float m = hf.elevation.empty() ? 0.0f : hf.elevation[0];
        for (float v : hf.elevation) m = std::max(m, v);
        return static_cast<double>(m);
    }();
    double t = std::max(t0, 0.0);
    double x = origin.x() + t * dir.x();
    double y = origin.y() + t * dir.y();
    double z = origin.z() + t * dir.z();
    if (!hf.contains(x, y)) return std::nullopt;
    double prev_t = t;
    double prev_dz = z - hf.sample(x, y);
    if (prev_dz <= 0) return std::nullopt;  // starting below terrain: caller bug or bad restart
    while (t < max_range) {
        t += step;
        x = origin.x() + t * dir.x();
        y = origin.y() + t * dir.y();
        z = origin.z() + t * dir.z();
        if (!hf.contains(x, y)) return std::nullopt;
        if (dir.z() >= 0 && z > zmax) return std::nullopt;
        double dz = z - hf.sample(x, y);
        if (dz <= 0) {
            // Bisection refinement on [prev_t, t].
            double lo = prev_t, hi = t;
            for (int i = 0; i < 25; ++i) {
                double mid = 0.5 * (lo + hi);
                double mx = origin.x() + mid * dir.x();
                double my = origin.y() + mid * dir.y();
                double mz = origin.z() + mid * dir.z() - hf.sample(mx, my);
                if (mz > 0)
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        }
        prev_t = t;
        prev_dz = dz;
    }
    return std::nullopt;
}

namespace {

// Cache of the terrain ceiling so raymarch inner loops stay cheap.
struct Marcher {
    const HeightField& hf;
    double zmax;
    explicit Marcher(const HeightField& h) : hf(h) {
        float m = hf.elevation.empty() ? 0.0f : hf.elevation[0];
        for (float v : hf.elevation) m = std::max(m, v);
        zmax = m;
    }
    std::optional<double> march(const Vec3& origin, const Vec3& dir, double t0,
                                double max_range) const {
        const double step = 0.5 * hf.cell_size;
        double t = std::max(t0, 0.0);
        double x = origin.x() + t * dir.x();
        double y = origin.y() + t * dir.y();
        if (!hf.contains(x, y)) {
            if (t0 > 0) return march(origin, dir, 0.0, max_range);
            return std::nullopt;
        }
        double prev_t = t;
        double dz0 = origin.z() + t * dir.z() - hf.sample(x, y);
        if (dz0 <= 0) {
            // Restart hint overshot the surface; fall back to a full march.
            if (t0 > 0) return march(origin, dir, 0.0, max_range);
            return std::nullopt;
        }
        while (t < max_range) {
            t += step;
            x = origin.x() + t * dir.x();
            y = origin.y() + t * dir.y();
            if (!hf.contains(x, y)) return std::nullopt;
            double z = origin.z() + t * dir.z();
            if (dir.z() >= 0 && z > zmax) return std::nullopt;
            if (z - hf.sample(x, y) <= 0) {
                double lo = prev_t, hi = t;
                for (int i = 0; i < 25; ++i) {
                    double mid = 0.5 * (lo + hi);
                    double mz = origin.z() + mid * dir.z() -
                                hf.sample(origin.x() + mid * dir.x(), origin.y() + mid * dir.y());
                    if (mz > 0)
                        lo = mid;
                    else
                        hi = mid;
                }
                return 0.5 * (lo + hi);
            }
            prev_t = t;
        }
        return std::nullopt;
    }
};

}  // namespace

PointCloud simulate_lidar(const SceneTruth& scene, const LidarConfig& cfg, uint64_t seed,
                          ExecMode mode) {
    const HeightField& hf = scene.heightfield;
    const RoverPose& pose = scene.rover_pose;
    const Vec3 origin(pose.x, pose.y, hf.sample(pose.x, pose.y) + cfg.height);

    const int n_az = static_cast<int>(std::floor(cfg.horizontal_fov_deg / cfg.horizontal_res_deg));
    const int n_el = static_cast<int>(std::floor(cfg.vertical_fov_deg / cfg.vertical_res_deg));
    const double az0 = -0.5 * deg2rad(cfg.horizontal_fov_deg);
    const double el0 = -0.5 * deg2rad(cfg.vertical_fov_deg);
    const double daz = deg2rad(cfg.horizontal_res_deg);
    const double del = deg2rad(cfg.vertical_res_deg);
    const double max_range = std::hypot(hf.width(), hf.height()) + 10.0;

    Marcher marcher(hf);
    std::vector<std::vector<Vec3>> per_az(static_cast<size_t>(n_az));

    parallel_for(mode, n_az, [&](int64_t ai) {
        auto& out = per_az[static_cast<size_t>(ai)];
        const double az = pose.heading + az0 + (static_cast<double>(ai) + 0.5) * daz;
        const double ca = std::cos(az), sa = std::sin(az);
        double prev_hit = -1.0;
        // Elevation sweep from steepest-down to shallowest: hit range is
        // monotone within the vertical scan plane, so each ray restarts just
        // short of the previous hit.
        for (int ei = 0; ei < n_el; ++ei) {
            const double pitch = el0 + (ei + 0.5) * del - deg2rad(cfg.tilt_deg);
            const double cp = std::cos(pitch), sp = std::sin(pitch);
            Vec3 dir(cp * ca, cp * sa, sp);
            double t0 = prev_hit > 0 ? std::max(0.0, prev_hit - 0.5) : 0.0;
            auto hit = marcher.march(origin, dir, t0, max_range);
            if (!hit) continue;
            prev_hit = *hit;
            double range = *hit;
            if (cfg.range_noise_sigma > 0)
                range += cfg.range_noise_sigma *
                         rng::gaussian(rng::mix(seed, 0x11da5ull, static_cast<uint64_t>(ai),
                                                static_cast<uint64_t>(ei)));
            out.push_back(origin + range * dir);
        }
    });

    PointCloud cloud;
    cloud.frame = Frame::Site;
    cloud.sensor_origin = origin;
    size_t total = 0;
    for (const auto& v : per_az) total += v.size();
    cloud.points.reserve(total);
    for (const auto& v : per_az) cloud.points.insert(cloud.points.end(), v.begin(), v.end());
    return cloud;
}

CameraModel CameraModel::from_config(const StereoConfig& cfg, const RoverPose& pose,
                                     double ground_z) {
    CameraModel cam;
    cam.position = Vec3(pose.x, pose.y, ground_z + cfg.camera_height);
    const double ch = std::cos(pose.heading), sh = std::sin(pose.heading);
    const double ct = std::cos(deg2rad(cfg.tilt_deg)), st = std::sin(deg2rad(cfg.tilt_deg));
    // Forward pitched down by tilt; x right; y down.
    Vec3 fwd(ct * ch, ct * sh, -st);
    Vec3 right(sh, -ch, 0);
    Vec3 down = fwd.cross(right).normalized();
    if (down.z() > 0) down = -down;
    cam.cam_to_site.col(0) = right;
    cam.cam_to_site.col(1) = down;
    cam.cam_to_site.col(2) = fwd;
    cam.focal_px = cfg.focal_px();
    cam.cx = 0.5 * cfg.image_width;
    cam.cy = 0.5 * cfg.image_height;
    return cam;
}

Vec3 CameraModel::pixel_ray_site(double u, double v) const {
    Vec3 d_cam((u - cx) / focal_px, (v - cy) / focal_px, 1.0);
    return (cam_to_site * d_cam).normalized();
}

Vec3 CameraModel::triangulate(double u, double v, double d, double baseline) const {
    const double depth = focal_px * baseline / d;  // along the optical axis
    Vec3 d_cam((u - cx) / focal_px, (v - cy) / focal_px, 1.0);
    return position + cam_to_site * (d_cam * depth);
}

StereoSimResult simulate_stereo(const SceneTruth& scene, const StereoConfig& cfg, uint64_t seed,
                                ExecMode mode) {
    const HeightField& hf = scene.heightfield;
    const RoverPose& pose = scene.rover_pose;
    const double ground_z = hf.sample(pose.x, pose.y);
    const CameraModel cam = CameraModel::from_config(cfg, pose, ground_z);
    const int W = cfg.image_width, H = cfg.image_height;
    const double max_range = std::hypot(hf.width(), hf.height()) + 10.0;

    std::vector<float> depth(static_cast<size_t>(W) * H,
                             std::numeric_limits<float>::quiet_NaN());
    Marcher marcher(hf);

    // Depth image: one ray per pixel. Within an image column the hit range is
    // near-monotone going up the image, so rays restart near the previous hit.
    parallel_for(mode, W, [&](int64_t u) {
        double prev_hit = -1.0;
        for (int v = H - 1; v >= 0; --v) {
            Vec3 dir = cam.pixel_ray_site(static_cast<double>(u) + 0.5, v + 0.5);
            double t0 = prev_hit > 0 ? std::max(0.0, prev_hit - 1.0) : 0.0;
            auto hit = marcher.march(cam.position, dir, t0, max_range);
            if (!hit) {
                prev_hit = -1.0;
                continue;
            }
            prev_hit = *hit;
            // Depth along the optical axis.
            double z = *hit * dir.dot(cam.cam_to_site.col(2));
            depth[static_cast<size_t>(v) * W + u] = static_cast<float>(z);
        }
    });

    StereoSimResult res;
    res.camera_position = cam.position;
    res.disparity.width = W;
    res.disparity.height = H;
    res.disparity.disparity.assign(static_cast<size_t>(W) * H,
                                   std::numeric_limits<float>::quiet_NaN());

    const double f = cam.focal_px;
    parallel_for(mode, H, [&](int64_t v) {
        for (int u = 0; u < W; ++u) {
            const float z = depth[static_cast<size_t>(v) * W + u];
            if (!std::isfinite(z)) continue;
            // Range-discontinuity dropout over the 3x3 neighborhood.
            bool discont = false;
            for (int dv = -1; dv <= 1 && !discont; ++dv) {
                for (int du = -1; du <= 1; ++du) {
                    int uu = u + du, vv = static_cast<int>(v) + dv;
                    if (uu < 0 || uu >= W || vv < 0 || vv >= H) continue;
                    float zn = depth[static_cast<size_t>(vv) * W + uu];
                    if (!std::isfinite(zn) || std::abs(zn - z) > cfg.discontinuity_range) {
                        discont = true;
                        break;
                    }
                }
            }
            if (discont &&
                rng::uniform(rng::mix(seed, 0xd0d0ull, static_cast<uint64_t>(v),
                                      static_cast<uint64_t>(u))) < cfg.dropout_probability)
                continue;
            double d = f * cfg.baseline / z;
            if (cfg.disparity_noise_sigma > 0)
                d += cfg.disparity_noise_sigma *
                     rng::gaussian(rng::mix(seed, 0x51e0ull, static_cast<uint64_t>(v),
                                            static_cast<uint64_t>(u)));
            if (d <= 0.05) continue;  // behind-camera / unbounded range after noise
            res.disparity.at(static_cast<int>(v), u) = static_cast<float>(d);
        }
    });

    res.cloud.frame = Frame::Site;
    res.cloud.sensor_origin = cam.position;
    for (int v = 0; v < H; ++v)
        for (int u = 0; u < W; ++u)
            if (res.disparity.valid(v, u))
                res.cloud.points.push_back(
                    cam.triangulate(u + 0.5, v + 0.5, res.disparity.at(v, u), cfg.baseline));
    return res;
}

void write_disparity(const std::string& raster_path, const DisparityMap& dmap,
                     const StereoConfig& cfg, const RoverPose& pose, double ground_z) {
    {
        std::ofstream out(raster_path, std::ios::binary);
        if (!out) throw io::IoError(raster_path + ": cannot open for writing");
        out.write(reinterpret_cast<const char*>(dmap.disparity.data()),
                  static_cast<std::streamsize>(dmap.disparity.size() * sizeof(float)));
        if (!out) throw io::IoError(raster_path + ": write failed");
    }
    json meta;
    meta["width"] = dmap.width;
    meta["height"] = dmap.height;
    meta["invalid"] = "NaN";
    meta["camera"] = {{"image_width", cfg.image_width},
                      {"image_height", cfg.image_height},
                      {"hfov_deg", cfg.hfov_deg},
                      {"baseline_m", cfg.baseline},
                      {"camera_height_m", cfg.camera_height},
                      {"tilt_deg", cfg.tilt_deg},
                      {"disparity_noise_sigma_px", cfg.disparity_noise_sigma}};
    meta["pose"] = {{"x", pose.x}, {"y", pose.y}, {"heading_rad", pose.heading}};
    meta["ground_z"] = ground_z;
    std::ofstream side(raster_path + ".json");
    if (!side) throw io::IoError(raster_path + ".json: cannot open for writing");
    side << meta.dump(2) << "\n";
}

DisparityFile read_disparity(const std::string& raster_path) {
    std::ifstream side(raster_path + ".json");
    if (!side) throw io::IoError(raster_path + ".json: cannot open");
    json meta = json::parse(side);
    DisparityFile file;
    file.dmap.width = meta.at("width");
    file.dmap.height = meta.at("height");
    const auto& c = meta.at("camera");
    file.cfg.image_width = c.at("image_width");
    file.cfg.image_height = c.at("image_height");
    file.cfg.hfov_deg = c.at("hfov_deg");
    file.cfg.baseline = c.at("baseline_m");
    file.cfg.camera_height = c.at("camera_height_m");
    file.cfg.tilt_deg = c.at("tilt_deg");
    if (c.contains("disparity_noise_sigma_px"))
        file.cfg.disparity_noise_sigma = c.at("disparity_noise_sigma_px");
    file.pose.x = meta.at("pose").at("x");
    file.pose.y = meta.at("pose").at("y");
    file.pose.heading = meta.at("pose").at("heading_rad");
    file.ground_z = meta.at("ground_z");
    std::ifstream in(raster_path, std::ios::binary);
    if (!in) throw io::IoError(raster_path + ": cannot open");
    const size_t n = static_cast<size_t>(file.dmap.width) * file.dmap.height;
    file.dmap.disparity.resize(n);
    in.read(reinterpret_cast<char*>(file.dmap.disparity.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != n * sizeof(float))
        throw io::IoError(raster_path + ": raster size mismatch");
    return file;
}

}  // namespace lunarloc
