// Black-box tests of the lunarloc CLI. The binary path arrives as argv[1].
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lunarloc/io.hpp"
#include "lunarloc/landmark_db.hpp"
#include "lunarloc/evalkit.hpp"
#include "lunarloc/sensor_sim.hpp"

namespace fs = std::filesystem;
using namespace lunarloc;

static std::string g_cli;
static std::string g_dir;  // scratch directory for fixtures and outputs

namespace {

int run(const std::string& args) {
    std::string cmd = g_cli + " " + args + " >" + g_dir + "/stdout.txt 2>" + g_dir +
                      "/stderr.txt";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("no subcommand and bad flags exit 2") {
    CHECK(run("") == 2);
    CHECK(run("scene --seed 1") == 2);          // missing --diameter
    CHECK(run("frobnicate") == 2);              // unknown subcommand
    CHECK(run("detect --method sonar") == 2);   // not in {lidar, stereo}
    CHECK(run("eval --detector lidar") == 2);   // no preset and no grid
    CHECK(run("--help") == 0);
}

TEST_CASE("scene: same seed gives byte-identical outputs") {
    std::string a = g_dir + "/scene_a", b = g_dir + "/scene_b";
    CHECK(run("scene --diameter 10 --range 12 --seed 5 --out " + a + " --stem s") == 0);
    CHECK(run("scene --diameter 10 --range 12 --seed 5 --out " + b + " --stem s") == 0);
    std::string ra = slurp(a + "/s.f32");
    CHECK(!ra.empty());
    CHECK(ra == slurp(b + "/s.f32"));
    CHECK(slurp(a + "/s.truth.json") == slurp(b + "/s.truth.json"));
    // Different seed changes the raster.
    CHECK(run("scene --diameter 10 --range 12 --seed 6 --out " + b + " --stem t") == 0);
    CHECK(ra != slurp(b + "/t.f32"));
}

TEST_CASE("scene preset writes a full sweep manifest") {
    std::string dir = g_dir + "/preset";
    CHECK(run("scene --preset paper-4.1 --seed 1 --out " + dir) == 0);
    std::string manifest = slurp(dir + "/manifest.json");
    REQUIRE(!manifest.empty());
    // 7 diameters x 16 ranges x 4 approaches = 448 cells.
    size_t cells = 0, pos = 0;
    while ((pos = manifest.find("\"range_m\"", pos)) != std::string::npos) {
        ++cells;
        ++pos;
    }
    CHECK(cells == 448);
    CHECK(run("scene --preset bogus --seed 1 --out " + dir) == 2);
}

TEST_CASE("detect lidar: finds the fixture crater; empty db yields no detections") {
    // Fixture built in-process with the same library the CLI links.
    SceneTruth scene = make_sweep_scene(10, 12, 0, 0.2, 0.02, 0.05, 0.03, 11);
    PointCloud cloud = simulate_lidar(scene, LidarConfig{}, 12);
    std::string ply = g_dir + "/fixture.ply";
    io::write_ply(ply, cloud);
    std::string db = g_dir + "/fixture.jsonl";
    db_from_scene(scene, 0.0).save_jsonl(db);
    std::string out = g_dir + "/dets.json";

    CHECK(run("detect --method lidar --cloud " + ply + " --db " + db + " --out " + out) == 0);
    std::string dets = slurp(out);
    CHECK(dets.find("\"landmark_id\": \"c0\"") != std::string::npos);
    CHECK(dets.find("\"method\": \"lidar\"") != std::string::npos);

    CHECK(run("detect --method lidar --cloud " + ply + " --out " + out) == 0);
    CHECK(slurp(out).find("x_m") == std::string::npos);  // empty array
}

TEST_CASE("detect stereo requires a disparity raster, not a point cloud") {
    CHECK(run("detect --method stereo --cloud " + g_dir + "/fixture.ply") == 2);
    CHECK(slurp(g_dir + "/stderr.txt").find("--disparity") != std::string::npos);
}

TEST_CASE("detect stereo runs on a written disparity raster") {
    SceneTruth scene = make_sweep_scene(10, 10, 0, 0.2, 0.02, 0.05, 0.03, 13);
    StereoConfig cfg;
    StereoSimResult sim = simulate_stereo(scene, cfg, 14);
    double gz = scene.heightfield.sample(scene.rover_pose.x, scene.rover_pose.y);
    std::string raster = g_dir + "/fixture_disp.f32";
    write_disparity(raster, sim.disparity, cfg, scene.rover_pose, gz);
    std::string out = g_dir + "/sdets.json";
    CHECK(run("detect --method stereo --disparity " + raster + " --out " + out) == 0);
    CHECK(slurp(out).find("\"method\": \"stereo\"") != std::string::npos);
}

TEST_CASE("missing input files exit 1") {
    CHECK(run("detect --method lidar --cloud " + g_dir + "/nope.ply") == 1);
    CHECK(run("traverse --scene " + g_dir + "/nope.json --route " + g_dir +
              "/nope_route.json --seed 1") == 1);
}

TEST_CASE("eval: repeated runs are byte-identical") {
    std::string cfg = g_dir + "/eval_cfg.json";
    std::ofstream(cfg) << "{\"scene_roughness\": 0.0, \"scene_cell_size\": 0.1}\n";
    std::string base = " --config " + cfg +
                       " eval --detector lidar --diameters 10 --ranges 8 --seeds 2 --seed 3";
    std::string c1 = g_dir + "/r1.csv", j1 = g_dir + "/r1.json";
    std::string c2 = g_dir + "/r2.csv", j2 = g_dir + "/r2.json";
    CHECK(run(base + " --out-csv " + c1 + " --out-json " + j1) == 0);
    CHECK(run(base + " --out-csv " + c2 + " --out-json " + j2) == 0);
    std::string csv = slurp(c1);
    REQUIRE(!csv.empty());
    CHECK(csv == slurp(c2));
    CHECK(slurp(j1) == slurp(j2));
    CHECK(csv.find("diameter_m") != std::string::npos);
}

TEST_CASE("traverse: repeated runs are byte-identical") {
    // Scene with one crater off to the side of a short straight route.
    SceneParams p;
    p.extent = 140;
    p.cell_size = 0.1;
    p.roughness = 0.03;
    p.rover_pose = {-20, 0, 0};
    CraterSpec c{"c0", {0, 12}, 10, 2.0, 0.2};
    SceneTruth scene = synthesize_scene({c}, p, 21);
    io::write_scene(g_dir, "trav_scene", scene);
    std::string route = g_dir + "/route.json";
    std::ofstream(route) << "[[-20,0],[20,0]]\n";
    std::string cfg = g_dir + "/trav_cfg.json";
    std::ofstream(cfg) << "{\"lidar_vertical_res_deg\": 1.0, \"lidar_horizontal_res_deg\": 1.0}\n";
    std::string base = " --config " + cfg + " traverse --scene " + g_dir +
                       "/trav_scene.truth.json --route " + route + " --seed 4 --sense-every 20";
    std::string o1 = g_dir + "/t1.jsonl", o2 = g_dir + "/t2.jsonl";
    CHECK(run(base + " --out " + o1) == 0);
    CHECK(run(base + " --out " + o2) == 0);
    std::string log = slurp(o1);
    REQUIRE(!log.empty());
    CHECK(log == slurp(o2));
    CHECK(log.find("\"truth_xy\"") != std::string::npos);
}

}  // TEST_SUITE

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_tests <path-to-lunarloc-binary> [doctest args]\n");
        return 1;
    }
    g_cli = argv[1];
    g_dir = (fs::temp_directory_path() / "lunarloc_cli_tests").string();
    fs::create_directories(g_dir);
    doctest::Context ctx;
    ctx.applyCommandLine(argc - 1, argv + 1);
    return ctx.run();
}
