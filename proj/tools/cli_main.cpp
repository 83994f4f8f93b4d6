#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "lunarloc/evalkit.hpp"
#include "lunarloc/io.hpp"
#include "lunarloc/lidar_detector.hpp"
#include "lunarloc/localizer.hpp"
#include "lunarloc/rng.hpp"
#include "lunarloc/stereo_detector.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lunarloc;

namespace {

// paper-4.1 sweep preset: the crater-approach evaluation grid.
const std::vector<double> kPresetDiameters = {5, 7, 10, 12, 15, 17, 20};
const std::vector<double> kPresetApproaches = {0, 90, 180, 270};
std::vector<double> preset_ranges() {
    std::vector<double> r;
    for (int i = 5; i <= 20; ++i) r.push_back(i);
    return r;
}

std::string default_out_dir() {
    const char* env = std::getenv("LUNARLOC_OUT");
    return env ? env : ".";
}

// All tunable thresholds live in one JSON config so sweeps need no rebuild.
void apply_config(const json& j, SweepConfigs& cfgs, LocalizerConfig& loc) {
    auto get = [&](const char* key, double& slot) {
        if (j.contains(key)) slot = j.at(key).get<double>();
    };
    get("scene_cell_size", cfgs.scene_cell_size);
    get("scene_roughness", cfgs.scene_roughness);
    get("depth_fraction", cfgs.depth_fraction);
    get("rim_fraction", cfgs.rim_fraction);
    get("lidar_range_noise_sigma", cfgs.lidar.range_noise_sigma);
    get("lidar_vertical_res_deg", cfgs.lidar.vertical_res_deg);
    get("lidar_horizontal_res_deg", cfgs.lidar.horizontal_res_deg);
    get("stereo_disparity_noise_sigma", cfgs.stereo.disparity_noise_sigma);
    get("stereo_dropout_probability", cfgs.stereo.dropout_probability);
    get("detector_voxel_size", cfgs.lidar_detector.voxel_size);
    get("detector_accept_threshold", cfgs.lidar_detector.accept_threshold_per_sample);
    get("detector_grid_extent", cfgs.lidar_detector.grid_extent);
    get("detector_grid_pitch", cfgs.lidar_detector.grid_pitch);
    get("detector_diam_tol", cfgs.lidar_detector.diam_tol);
    get("stereo_jump_threshold", cfgs.stereo_detector.jump_threshold);
    get("stereo_lin_tol", cfgs.stereo_detector.lin_tol);
    get("localizer_consistency_tol", loc.consistency_tol);
    get("localizer_diam_agreement", loc.diam_agreement);
}

json detection_to_json(const CraterDetection& d) {
    json j = {{"x_m", d.center_xy.x()},
              {"y_m", d.center_xy.y()},
              {"diameter_m", d.diameter},
              {"score", d.score},
              {"method", d.method == DetectionMethod::Lidar ? "lidar" : "stereo"}};
    if (d.landmark_id) j["landmark_id"] = *d.landmark_id;
    return j;
}

int cmd_scene(double diameter, double range, double approach, uint64_t seed,
              const std::string& out_dir, std::string stem, const SweepConfigs& cfgs,
              bool preset) {
    fs::create_directories(out_dir);
    if (preset) {
        json manifest;
        manifest["seed"] = seed;
        json cells = json::array();
        uint64_t idx = 0;
        for (double d : kPresetDiameters)
            for (double r : preset_ranges())
                for (double a : kPresetApproaches)
                    cells.push_back({{"diameter_m", d},
                                     {"range_m", r},
                                     {"approach_deg", a},
                                     {"seed", rng::mix(seed, idx++)}});
        manifest["cells"] = cells;
        std::ofstream out(out_dir + "/manifest.json");
        out << manifest.dump(2) << "\n";
        std::cout << "wrote " << out_dir << "/manifest.json (" << cells.size() << " cells)\n";
        return 0;
    }
    if (stem.empty()) stem = "scene";
    SceneTruth scene = make_sweep_scene(diameter, range, approach, cfgs.depth_fraction,
                                        cfgs.rim_fraction, cfgs.scene_cell_size,
                                        cfgs.scene_roughness, seed);
    io::write_scene(out_dir, stem, scene);
    std::cout << "wrote " << out_dir << "/" << stem << ".f32 and " << stem << ".truth.json\n";
    return 0;
}

int cmd_detect(const std::string& method, const std::string& cloud_path,
               const std::string& disparity_path, const std::string& db_path,
               const std::string& out_path, double prior_x, double prior_y,
               double prior_heading, double prior_sigma, const SweepConfigs& cfgs) {
    std::vector<CraterDetection> dets;
    if (method == "lidar") {
        PointCloud cloud = io::read_ply(cloud_path);
        LandmarkDb db = db_path.empty() ? LandmarkDb{} : LandmarkDb::load_jsonl(db_path);
        RoverState prior;
        prior.position = Vec2(prior_x, prior_y);
        prior.heading = prior_heading;
        prior.covariance = prior_sigma * prior_sigma * Eigen::Matrix2d::Identity();
        dets = detect_lidar(cloud, prior, db, cfgs.lidar_detector);
    } else {
        DisparityFile file = read_disparity(disparity_path);
        CameraModel cam = CameraModel::from_config(file.cfg, file.pose, file.ground_z);
        dets = detect_stereo(file.dmap, file.cfg, cam, cfgs.stereo_detector);
    }
    json j = json::array();
    for (const auto& d : dets) j.push_back(detection_to_json(d));
    std::ofstream out(out_path);
    if (!out) throw io::IoError(out_path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    std::cout << dets.size() << " detection(s) -> " << out_path << "\n";
    return 0;
}

int cmd_traverse(const std::string& scene_path, const std::string& route_path,
                 const std::string& db_path, double drift, uint64_t seed,
                 const std::string& out_path, TraverseConfig cfg) {
    SceneTruth scene = io::read_scene(scene_path);
    std::ifstream rin(route_path);
    if (!rin) throw io::IoError(route_path + ": cannot open");
    json rj = json::parse(rin);
    const json& wp = rj.is_array() ? rj : rj.at("waypoints");
    std::vector<Vec2> route;
    for (const auto& p : wp) route.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    LandmarkDb db = db_path.empty() ? db_from_scene(scene, 0.5, rng::mix(seed, 0xdb))
                                    : LandmarkDb::load_jsonl(db_path);
    cfg.drift_fraction = drift;
    TraverseLog log = run_traverse(scene, route, cfg, db, seed);
    write_traverse_log(out_path, log);
    std::cout << log.steps.size() << " step(s) -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& detector, bool preset, std::vector<double> diameters,
             std::vector<double> ranges, std::vector<double> approaches, int seeds,
             uint64_t seed, const std::string& out_csv, const std::string& out_json,
             const SweepConfigs& cfgs) {
    SweepGrid grid;
    if (preset) {
        grid.diameters = kPresetDiameters;
        grid.ranges = preset_ranges();
        grid.approach_deg = kPresetApproaches;
    } else {
        grid.diameters = diameters;
        grid.ranges = ranges;
        grid.approach_deg = approaches;
    }
    grid.seeds_per_cell = seeds;
    SweepDetector det = (detector == "lidar") ? SweepDetector::Lidar : SweepDetector::Stereo;
    KppReport report = run_sweep(det, grid, cfgs, seed);
    emit_report(report, out_csv, out_json);
    std::cout << report.rows.size() << " trial(s) -> " << out_csv << ", " << out_json << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lunarloc: crater-landmark localization pipeline"};
    app.require_subcommand(1);

    SweepConfigs cfgs;
    LocalizerConfig loc_cfg;
    std::string config_path;
    app.add_option("--config", config_path, "JSON file overriding numeric thresholds");

    // scene
    auto* scene = app.add_subcommand("scene", "Synthesize a crater scene");
    double s_diam = 0, s_range = 15, s_approach = 0;
    uint64_t s_seed = 0;
    std::string s_out = default_out_dir(), s_stem, s_preset;
    auto* s_diam_opt = scene->add_option("--diameter", s_diam, "Crater diameter (m)");
    scene->add_option("--range", s_range, "Near-rim range from the rover (m)");
    scene->add_option("--approach", s_approach, "Approach bearing (deg)");
    scene->add_option("--seed", s_seed, "Master seed")->required();
    scene->add_option("--out", s_out, "Output directory");
    scene->add_option("--stem", s_stem, "Output file stem");
    scene->add_option("--preset", s_preset, "Named sweep preset (paper-4.1)");

    // detect
    auto* detect = app.add_subcommand("detect", "Run a crater detector");
    std::string d_method, d_cloud, d_disparity, d_db, d_out = "detections.json";
    double d_px = 0, d_py = 0, d_ph = 0, d_psigma = 0.5;
    detect->add_option("--method", d_method, "lidar|stereo")
        ->required()
        ->check(CLI::IsMember({"lidar", "stereo"}));
    detect->add_option("--cloud", d_cloud, "Input PLY point cloud (lidar)");
    detect->add_option("--disparity", d_disparity, "Input disparity raster (stereo)");
    detect->add_option("--db", d_db, "Landmark database JSONL");
    detect->add_option("--out", d_out, "Output detections JSON");
    detect->add_option("--prior-x", d_px, "Prior rover x (m)");
    detect->add_option("--prior-y", d_py, "Prior rover y (m)");
    detect->add_option("--prior-heading", d_ph, "Prior rover heading (rad)");
    detect->add_option("--prior-sigma", d_psigma, "Prior position sigma (m)");

    // traverse
    auto* traverse = app.add_subcommand("traverse", "Run a localization traverse");
    std::string t_scene, t_route, t_db, t_out = "traverse.jsonl";
    double t_drift = 0.02, t_sense = 10.0, t_step = 1.0;
    uint64_t t_seed = 0;
    traverse->add_option("--scene", t_scene, "Scene truth JSON")->required();
    traverse->add_option("--route", t_route, "Route waypoints JSON")->required();
    traverse->add_option("--db", t_db, "Landmark database JSONL");
    traverse->add_option("--drift", t_drift, "Odometry drift fraction");
    traverse->add_option("--sense-every", t_sense, "Sensing cadence (m)");
    traverse->add_option("--step", t_step, "Odometry step length (m)");
    traverse->add_option("--seed", t_seed, "Master seed")->required();
    traverse->add_option("--out", t_out, "Output traverse log JSONL");

    // eval
    auto* eval = app.add_subcommand("eval", "Run a KPP evaluation sweep");
    std::string e_detector, e_preset, e_csv = "report.csv", e_json = "report.json";
    std::vector<double> e_diams, e_ranges, e_apprs = {0};
    int e_seeds = 40;
    uint64_t e_seed = 0;
    eval->add_option("--detector", e_detector, "lidar|stereo")
        ->required()
        ->check(CLI::IsMember({"lidar", "stereo"}));
    eval->add_option("--preset", e_preset, "Named sweep preset (paper-4.1)");
    eval->add_option("--diameters", e_diams, "Crater diameters (m)");
    eval->add_option("--ranges", e_ranges, "Near-rim ranges (m)");
    eval->add_option("--approaches", e_apprs, "Approach bearings (deg)");
    eval->add_option("--seeds", e_seeds, "Seeds per cell");
    eval->add_option("--seed", e_seed, "Master seed");
    eval->add_option("--out-csv", e_csv, "Output CSV path");
    eval->add_option("--out-json", e_json, "Output JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // --help exits 0, every usage error exits 2
    }

    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw io::IoError(config_path + ": cannot open");
            apply_config(json::parse(in), cfgs, loc_cfg);
        }

        if (scene->parsed()) {
            if (!s_preset.empty() && s_preset != "paper-4.1") {
                std::cerr << "unknown preset: " << s_preset << "\n";
                return 2;
            }
            if (s_preset.empty() && s_diam_opt->count() == 0) {
                std::cerr << "scene requires --diameter (or --preset)\n"
                          << scene->help();
                return 2;
            }
            return cmd_scene(s_diam, s_range, s_approach, s_seed, s_out, s_stem, cfgs,
                             !s_preset.empty());
        }
        if (detect->parsed()) {
            if (d_method == "lidar" && d_cloud.empty()) {
                std::cerr << "detect --method lidar requires --cloud <file.ply>\n";
                return 2;
            }
            if (d_method == "stereo" && d_disparity.empty()) {
                std::cerr << "detect --method stereo requires --disparity <file.f32>; "
                             "a PLY cloud alone is not enough (the stereo detector works "
                             "on the disparity image)\n";
                return 2;
            }
            return cmd_detect(d_method, d_cloud, d_disparity, d_db, d_out, d_px, d_py, d_ph,
                              d_psigma, cfgs);
        }
        if (traverse->parsed()) {
            TraverseConfig tcfg;
            tcfg.sense_every = t_sense;
            tcfg.step_length = t_step;
            tcfg.lidar = cfgs.lidar;
            tcfg.detector = cfgs.lidar_detector;
            tcfg.localizer = loc_cfg;
            return cmd_traverse(t_scene, t_route, t_db, t_drift, t_seed, t_out, tcfg);
        }
        if (eval->parsed()) {
            if (!e_preset.empty() && e_preset != "paper-4.1") {
                std::cerr << "unknown preset: " << e_preset << "\n";
                return 2;
            }
            if (e_preset.empty() && (e_diams.empty() || e_ranges.empty())) {
                std::cerr << "eval requires --preset or --diameters/--ranges\n";
                return 2;
            }
            return cmd_eval(e_detector, !e_preset.empty(), e_diams, e_ranges, e_apprs, e_seeds,
                            e_seed, e_csv, e_json, cfgs);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
