#include <doctest.h>

#include <cmath>
#include <fstream>

#include "lunarloc/localizer.hpp"
#include "lunarloc/rng.hpp"

using namespace lunarloc;

namespace {

CraterDetection det_at(double x, double y, double diameter) {
    CraterDetection d;
    d.center_xy = Vec2(x, y);
    d.diameter = diameter;
    d.score = 0;
    d.method = DetectionMethod::Lidar;
    return d;
}

}  // namespace

TEST_SUITE("localizer") {

TEST_CASE("propagate: zero drift moves exactly, covariance unchanged") {
    RoverState s;
    s.position = Vec2(3, 4);
    s.heading = 0;
    s.covariance = 0.01 * Eigen::Matrix2d::Identity();
    OdometrySegment odo{10.0, 0.0, 0.0};
    RoverState n = propagate(s, odo, 1);
    CHECK(n.position == Vec2(13, 4));
    CHECK(n.covariance == s.covariance);
    CHECK(n.distance_traveled == doctest::Approx(10.0));
}

TEST_CASE("propagate: Monte Carlo random-walk variance oracle") {
    // Oracle (frozen before implementation): 100 steps of 1 m at 2% drift give
    // per-axis terminal RMS = 0.02 * sqrt(100) = 0.2 m; accept +-15%.
    const int runs = 1000, steps = 100;
    double sx = 0, sy = 0;
    for (int r = 0; r < runs; ++r) {
        RoverState s;
        for (int k = 0; k < steps; ++k)
            s = propagate(s, {1.0, 0.0, 0.02}, rng::mix(55, r, k));
        Vec2 err = s.position - Vec2(steps, 0);
        sx += err.x() * err.x();
        sy += err.y() * err.y();
    }
    double rms_x = std::sqrt(sx / runs), rms_y = std::sqrt(sy / runs);
    CHECK(rms_x > 0.2 * 0.85);
    CHECK(rms_x < 0.2 * 1.15);
    CHECK(rms_y > 0.2 * 0.85);
    CHECK(rms_y < 0.2 * 1.15);
    // The propagated covariance models the same walk.
    RoverState s;
    for (int k = 0; k < steps; ++k) s = propagate(s, {1.0, 0.0, 0.02}, rng::mix(56, k));
    CHECK(std::sqrt(s.covariance(0, 0)) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("propagate: covariance trace strictly increases with drift") {
    RoverState s;
    double prev = 0;
    for (int k = 0; k < 10; ++k) {
        s = propagate(s, {1.0, 0.1, 0.02}, rng::mix(57, k));
        CHECK(s.covariance.trace() > prev);
        prev = s.covariance.trace();
    }
}

TEST_CASE("associate: single detection within gate pairs up") {
    LandmarkDb db({{"a", {20, 5}, 10, 2}});
    RoverState prior;
    prior.position = Vec2(0, 0);
    prior.heading = 0;
    prior.covariance = Eigen::Matrix2d::Identity();
    LocalizerConfig cfg;
    MatchSet m = associate({det_at(19.5, 5.2, 10)}, db, prior, cfg);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].landmark.id == "a");
}

TEST_CASE("associate: pairwise consistency drops a spurious detection") {
    LandmarkDb db({{"a", {20, 0}, 10, 2}, {"b", {0, 20}, 8, 1.6}, {"c", {-15, -10}, 12, 2.4}});
    RoverState prior;
    prior.covariance = 4.0 * Eigen::Matrix2d::Identity();
    LocalizerConfig cfg;
    std::vector<CraterDetection> dets = {
        det_at(20.3, 0.2, 10),    // true -> a
        det_at(-0.2, 19.8, 8),    // true -> b
        det_at(-15 + 10, -10, 12) // spurious: 10 m off landmark c
    };
    MatchSet m = associate(dets, db, prior, cfg);
    REQUIRE(m.pairs.size() == 2);
    for (const auto& p : m.pairs) CHECK(p.landmark.id != "c");
}

TEST_CASE("associate: large prior error still assigns by mutual distances") {
    LandmarkDb db({{"a", {50, 0}, 10, 2}, {"b", {80, 0}, 16, 3.2}});
    RoverState prior;
    prior.position = Vec2(10, 0);  // 10 m prior error vs truth at (0,0)
    prior.covariance = 16.0 * Eigen::Matrix2d::Identity();
    LocalizerConfig cfg;
    // Rover truly at origin: detections at rover-relative 50 and 80 m.
    MatchSet m = associate({det_at(50, 0, 10), det_at(80, 0, 16)}, db, prior, cfg);
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0].landmark.id == "a");
    CHECK(m.pairs[1].landmark.id == "b");
}

TEST_CASE("update: zero-noise measurement pins the posterior") {
    RoverState s;
    s.position = Vec2(5, 5);
    s.covariance = 25.0 * Eigen::Matrix2d::Identity();
    LocalizerConfig cfg;
    cfg.lidar_sigma_by_diameter = {{5, 0.0}, {20, 0.0}};
    MatchSet m;
    m.pairs.push_back({det_at(10, 0, 10), {"a", {14, 2}, 10, 2}, 0.0});
    RoverState n = update(s, m, cfg);
    // Implied position = landmark - R(0) * detection = (4, 2).
    CHECK((n.position - Vec2(4, 2)).norm() < 1e-9);
}

TEST_CASE("update: scalar information-filter arithmetic") {
    RoverState s;
    s.position = Vec2(0, 0);
    s.covariance = 100.0 * Eigen::Matrix2d::Identity();  // (10 m)^2
    LocalizerConfig cfg;
    cfg.lidar_sigma_by_diameter = {{5, 1.0}, {20, 1.0}};  // (1 m)^2
    MatchSet m;
    m.pairs.push_back({det_at(10, 0, 10), {"a", {11, 0}, 10, 2}, 0.0});
    RoverState n = update(s, m, cfg);
    double expected_var = 1.0 / (1.0 / 100.0 + 1.0 / 1.0);
    CHECK(n.covariance(0, 0) == doctest::Approx(expected_var).epsilon(1e-9));
    CHECK(n.covariance(1, 1) == doctest::Approx(expected_var).epsilon(1e-9));
    // Posterior position moves toward the implied measurement (1, 0).
    CHECK(n.position.x() == doctest::Approx(1.0 * expected_var / 1.0).epsilon(1e-6));
}

TEST_CASE("update: contraction and information additivity") {
    RoverState s;
    s.covariance = 9.0 * Eigen::Matrix2d::Identity();
    LocalizerConfig cfg;
    MatchSet one;
    one.pairs.push_back({det_at(10, 0, 10), {"a", {10, 0}, 10, 2}, 0.0});
    MatchSet three = one;
    three.pairs.push_back({det_at(0, 10, 10), {"b", {0, 10}, 10, 2}, 0.0});
    three.pairs.push_back({det_at(-10, 0, 10), {"c", {-10, 0}, 10, 2}, 0.0});
    RoverState n1 = update(s, one, cfg);
    RoverState n3 = update(s, three, cfg);
    CHECK(n1.covariance.trace() <= s.covariance.trace());
    CHECK(n3.covariance.trace() <= n1.covariance.trace());
}

TEST_CASE("three_sigma uses the worst covariance axis") {
    RoverState s;
    s.covariance << 4.0, 0.0, 0.0, 1.0;
    CHECK(s.three_sigma() == doctest::Approx(6.0));
}

TEST_CASE("association invariance under joint translation") {
    std::vector<LandmarkRecord> recs = {{"a", {20, 0}, 10, 2}, {"b", {0, 25}, 8, 1.6}};
    RoverState prior;
    prior.covariance = Eigen::Matrix2d::Identity();
    LocalizerConfig cfg;
    std::vector<CraterDetection> dets = {det_at(20.2, -0.1, 10), det_at(0.3, 24.8, 8)};
    MatchSet m0 = associate(dets, LandmarkDb(recs), prior, cfg);

    Vec2 offset(137.0, -58.0);
    std::vector<LandmarkRecord> shifted = recs;
    for (auto& r : shifted) r.position += offset;
    RoverState sp = prior;
    sp.position += offset;
    MatchSet m1 = associate(dets, LandmarkDb(shifted), sp, cfg);
    REQUIRE(m0.pairs.size() == m1.pairs.size());
    for (size_t i = 0; i < m0.pairs.size(); ++i)
        CHECK(m0.pairs[i].landmark.id == m1.pairs[i].landmark.id);
}

TEST_CASE("traverse: zero drift, no landmarks tracks truth exactly") {
    SceneParams p;
    p.extent = 120;
    p.cell_size = 0.25;
    p.roughness = 0;
    p.rover_pose = {-50, 0, 0};
    SceneTruth scene = synthesize_scene({}, p, 1);
    TraverseConfig cfg;
    cfg.drift_fraction = 0;
    cfg.lidar.horizontal_res_deg = 2.0;  // coarse: no detections expected anyway
    cfg.lidar.vertical_res_deg = 2.0;
    TraverseLog log = run_traverse(scene, {{-50, 0}, {40, 0}}, cfg, LandmarkDb{}, 1);
    REQUIRE(!log.steps.empty());
    for (const auto& s : log.steps) CHECK((s.truth_xy - s.est_xy).norm() < 1e-9);
}

TEST_CASE("traverse log round trips as JSONL") {
    TraverseLog log;
    TraverseStep s;
    s.t = 1.5;
    s.truth_xy = Vec2(1, 2);
    s.est_xy = Vec2(1.1, 2.2);
    s.cov << 0.1, 0.01, 0.01, 0.2;
    s.n_matches = 2;
    s.matched_ids = {"a", "b"};
    s.update_step = true;
    log.steps.push_back(s);
    std::string path = "/tmp/lunarloc_traverse_test.jsonl";
    write_traverse_log(path, log);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line.find("\"n_matches\":2") != std::string::npos);
    CHECK(line.find("\"a\"") != std::string::npos);
    CHECK(!std::getline(in, line));
}

}  // TEST_SUITE
