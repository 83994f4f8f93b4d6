#include "lunarloc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lunarloc/io.hpp"
#include "lunarloc/landmark_db.hpp"
#include "lunarloc/localizer_types.hpp"
#include "lunarloc/rng.hpp"

namespace lunarloc {

using nlohmann::json;

void wilson_interval(int successes, int n, double& lo, double& hi) {
    if (n == 0) {
        lo = 0;
        hi = 1;
        return;
    }
    const double z = 1.959963984540054;  // 97.5th percentile of the standard normal
    const double z2 = z * z;
    const double p = static_cast<double>(successes) / n;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4.0 * n * n)) / denom;
    lo = std::max(0.0, center - half);
    hi = std::min(1.0, center + half);
}

std::vector<PdEntry> KppReport::pd_table() const {
    std::map<std::pair<double, double>, PdEntry> cells;
    for (const auto& r : rows) {
        auto& e = cells[{r.diameter, r.range}];
        e.diameter = r.diameter;
        e.range = r.range;
        ++e.n;
        if (r.detected) ++e.n_detected;
    }
    std::vector<PdEntry> out;
    for (auto& [key, e] : cells) {
        e.p_d = e.n ? static_cast<double>(e.n_detected) / e.n : 0.0;
        wilson_interval(e.n_detected, e.n, e.ci_lo, e.ci_hi);
        out.push_back(e);
    }
    return out;
}

std::vector<SigmaEntry> KppReport::sigma_table(double range_lo, double range_hi) const {
    std::map<double, SigmaEntry> per_d;
    std::map<double, double> sumsq;
    for (const auto& r : rows) {
        if (!r.detected) continue;
        if (r.range < range_lo - 1e-9 || r.range > range_hi + 1e-9) continue;
        auto& e = per_d[r.diameter];
        e.diameter = r.diameter;
        ++e.n_tp;
        sumsq[r.diameter] += r.err_x * r.err_x + r.err_y * r.err_y;
    }
    std::vector<SigmaEntry> out;
    for (auto& [d, e] : per_d) {
        e.sigma_p = e.n_tp ? std::sqrt(sumsq[d] / e.n_tp) : 0.0;
        out.push_back(e);
    }
    return out;
}

SceneTruth make_sweep_scene(double diameter, double range, double approach_deg,
                            double depth_fraction, double rim_fraction, double cell_size,
                            double roughness, uint64_t seed) {
    const double R = 0.5 * diameter;
    const double bearing = deg2rad(approach_deg);
    const Vec2 dir(std::cos(bearing), std::sin(bearing));
    CraterSpec crater;
    crater.id = "c0";
    crater.center_xy = (range + R) * dir;
    crater.diameter = diameter;
    crater.depth = depth_fraction * diameter;
    crater.rim_height = rim_fraction * diameter;

    SceneParams params;
    // Footprint must cover the rover at the origin and the crater profile,
    // which extends one diameter past the center.
    params.extent = 2.0 * (range + R + 2.0 * R + 6.0);
    params.cell_size = cell_size;
    params.roughness = roughness;
    params.rover_pose = {0.0, 0.0, bearing};
    return synthesize_scene({crater}, params, seed);
}

namespace {

SweepRow eval_cell_lidar(double diameter, double range, double approach, uint64_t seed,
                         const SweepConfigs& cfgs) {
    SweepRow row{diameter, range, approach, seed, false, 0, 0};
    try {
        SceneTruth scene = make_sweep_scene(diameter, range, approach, cfgs.depth_fraction,
                                            cfgs.rim_fraction, cfgs.scene_cell_size,
                                            cfgs.scene_roughness, rng::mix(seed, 0x5ce));
        PointCloud cloud =
            simulate_lidar(scene, cfgs.lidar, rng::mix(seed, 0x5e5), cfgs.lidar_detector.exec);

        LandmarkDb db({{scene.craters[0].id, scene.craters[0].center_xy, diameter,
                        scene.craters[0].depth}});
        RoverState prior;
        prior.position = Vec2(scene.rover_pose.x, scene.rover_pose.y);
        prior.heading = scene.rover_pose.heading;
        prior.covariance = 0.25 * Eigen::Matrix2d::Identity();

        auto dets = detect_lidar(cloud, prior, db, cfgs.lidar_detector);
        const Vec2 truth = scene.craters[0].center_xy;
        const double tp_radius = std::max(0.25 * diameter, 1.0);
        for (const auto& d : dets) {
            Vec2 err = d.center_xy - truth;
            if (err.norm() <= tp_radius) {
                row.detected = true;
                row.err_x = err.x();
                row.err_y = err.y();
                break;
            }
        }
    } catch (const std::exception&) {
        // Recorded as a miss.
    }
    return row;
}

SweepRow eval_cell_stereo(double diameter, double range, double approach, uint64_t seed,
                          const SweepConfigs& cfgs) {
    SweepRow row{diameter, range, approach, seed, false, 0, 0};
    try {
        SceneTruth scene = make_sweep_scene(diameter, range, approach, cfgs.depth_fraction,
                                            cfgs.rim_fraction, cfgs.scene_cell_size,
                                            cfgs.scene_roughness, rng::mix(seed, 0x5ce));
        StereoSimResult sim =
            simulate_stereo(scene, cfgs.stereo, rng::mix(seed, 0x5e5), cfgs.stereo_detector.exec);
        const double ground_z = scene.heightfield.sample(scene.rover_pose.x, scene.rover_pose.y);
        const CameraModel cam = CameraModel::from_config(cfgs.stereo, scene.rover_pose, ground_z);

        auto dets = detect_stereo(sim.disparity, cfgs.stereo, cam, cfgs.stereo_detector);
        const Vec2 truth = scene.craters[0].center_xy;
        const double tp_radius = std::max(0.25 * diameter, 1.0);
        double best = tp_radius;
        for (const auto& d : dets) {
            Vec2 err = d.center_xy - truth;
            if (err.norm() <= best) {
                best = err.norm();
                row.detected = true;
                row.err_x = err.x();
                row.err_y = err.y();
            }
        }
    } catch (const std::exception&) {
        // Recorded as a miss.
    }
    return row;
}

}  // namespace

KppReport run_sweep(SweepDetector detector, const SweepGrid& grid, const SweepConfigs& cfgs,
                    uint64_t master_seed) {
    KppReport report;
    report.detector = detector;
    if (!grid.valid())
        throw std::invalid_argument("run_sweep: sweep grid must have diameters, ranges, approaches, and seeds_per_cell > 0");

    struct Cell {
        double d, r, a;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    uint64_t idx = 0;
    for (double d : grid.diameters)
        for (double r : grid.ranges)
            for (double a : grid.approach_deg)
                for (int s = 0; s < grid.seeds_per_cell; ++s)
                    cells.push_back({d, r, a, rng::mix(master_seed, idx++)});

    report.rows.resize(cells.size());
    // Cells are independent; results land in preallocated slots so the row
    // order is identical regardless of scheduling.
    ExecMode mode = (detector == SweepDetector::Lidar) ? cfgs.lidar_detector.exec
                                                       : cfgs.stereo_detector.exec;
    parallel_for(mode, cells.size(), [&](size_t i) {
        const Cell& c = cells[i];
        report.rows[i] = (detector == SweepDetector::Lidar)
                             ? eval_cell_lidar(c.d, c.r, c.a, c.seed, cfgs)
                             : eval_cell_stereo(c.d, c.r, c.a, c.seed, cfgs);
    });
    return report;
}

void emit_report(const KppReport& report, const std::string& csv_path,
                 const std::string& json_path) {
    {
        std::ofstream out(csv_path);
        if (!out) throw io::IoError(csv_path + ": cannot open for writing");
        out << "diameter_m,range_m,approach_deg,seed,detected,err_x_m,err_y_m\n";
        char buf[256];
        for (const auto& r : report.rows) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%llu,%d,%.17g,%.17g\n",
                          r.diameter, r.range, r.approach_deg,
                          static_cast<unsigned long long>(r.seed), r.detected ? 1 : 0, r.err_x,
                          r.err_y);
            out << buf;
        }
        if (!out) throw io::IoError(csv_path + ": write failed");
    }
    {
        json j;
        j["detector"] = (report.detector == SweepDetector::Lidar) ? "lidar" : "stereo";
        j["tp_rule"] = {{"radius_fraction", report.tp_radius_fraction},
                        {"radius_floor_m", report.tp_radius_floor}};
        j["n_rows"] = report.rows.size();
        json pd = json::array();
        for (const auto& e : report.pd_table())
            pd.push_back({{"diameter_m", e.diameter},
                          {"range_m", e.range},
                          {"n", e.n},
                          {"n_detected", e.n_detected},
                          {"p_d", e.p_d},
                          {"ci95", {e.ci_lo, e.ci_hi}}});
        j["p_d"] = pd;
        json sig = json::array();
        for (const auto& e : report.sigma_table())
            sig.push_back({{"diameter_m", e.diameter},
                           {"n_tp", e.n_tp},
                           {"sigma_p_m", e.sigma_p},
                           {"three_sigma_m", 3.0 * e.sigma_p}});
        j["sigma_15_20m"] = sig;
        std::ofstream out(json_path);
        if (!out) throw io::IoError(json_path + ": cannot open for writing");
        out << j.dump(2) << "\n";
        if (!out) throw io::IoError(json_path + ": write failed");
    }
}

std::vector<SweepRow> read_report_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw io::IoError(csv_path + ": cannot open");
    std::vector<SweepRow> rows;
    std::string line;
    if (!std::getline(in, line)) throw io::IoError(csv_path + ": missing header");
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        SweepRow r;
        char comma;
        unsigned long long seed;
        int detected;
        if (!(ss >> r.diameter >> comma >> r.range >> comma >> r.approach_deg >> comma >> seed >>
              comma >> detected >> comma >> r.err_x >> comma >> r.err_y))
            throw io::IoError(csv_path + ": malformed row at line " + std::to_string(lineno));
        r.seed = seed;
        r.detected = detected != 0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace lunarloc
