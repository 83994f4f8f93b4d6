#include <doctest.h>

#include <cmath>

#include "lunarloc/terrain.hpp"

using namespace lunarloc;

TEST_SUITE("terrain") {

TEST_CASE("crater_profile endpoints") {
    CraterSpec c{"c", {0, 0}, 10.0, 2.0, 0.3};
    CHECK(crater_profile(c, 0.0) == doctest::Approx(-2.0));
    CHECK(crater_profile(c, 5.0) == doctest::Approx(0.3));      // rim radius
    CHECK(crater_profile(c, 10.0) == doctest::Approx(0.0));     // finite support
    CHECK(crater_profile(c, 25.0) == doctest::Approx(0.0));
}

TEST_CASE("crater_profile monotone interior and continuity") {
    CraterSpec c{"c", {0, 0}, 12.0, 2.4, 0.2};
    double prev = crater_profile(c, 0.0);
    for (double r = 0.01; r <= 6.0; r += 0.01) {
        double v = crater_profile(c, r);
        CHECK(v >= prev - 1e-12);  // monotone up to the rim
        prev = v;
    }
    // C0 continuity on a dense grid spanning all three pieces.
    for (double r = 0.0; r <= 13.0; r += 1e-3) {
        double a = crater_profile(c, r);
        double b = crater_profile(c, r + 1e-6);
        CHECK(std::abs(a - b) < 1e-4);
    }
}

TEST_CASE("empty scene with zero roughness is flat") {
    SceneParams p;
    p.extent = 10;
    p.cell_size = 0.1;
    p.roughness = 0;
    SceneTruth s = synthesize_scene({}, p, 1);
    for (float v : s.heightfield.elevation) CHECK(v == 0.0f);
}

TEST_CASE("single crater center elevation equals -depth") {
    SceneParams p;
    p.extent = 30;
    p.cell_size = 0.1;
    p.roughness = 0;
    p.rover_pose = {-12, 0, 0};
    CraterSpec c{"c", {0, 0}, 10.0, 2.0, 0.0};
    SceneTruth s = synthesize_scene({c}, p, 1);
    CHECK(s.heightfield.sample(0, 0) == doctest::Approx(-2.0).epsilon(0.01));
}

TEST_CASE("paper sweep diameters all synthesize") {
    for (double d : {5.0, 7.0, 10.0, 12.0, 15.0, 17.0, 20.0}) {
        SceneParams p;
        p.extent = std::max(40.0, 4.5 * d);
        p.cell_size = d / 25.0;
        p.roughness = 0.03;
        p.rover_pose = {-p.extent / 2 + 2, 0, 0};
        CraterSpec c{"c", {0, 0}, d, 0.2 * d, 0.02 * d};
        SceneTruth s = synthesize_scene({c}, p, 7);
        CHECK(s.craters.size() == 1);
        for (float v : s.heightfield.elevation) CHECK(std::isfinite(v));
    }
}

TEST_CASE("determinism: identical seeds give bit-identical rasters") {
    SceneParams p;
    p.extent = 20;
    p.cell_size = 0.1;
    p.roughness = 0.05;
    p.rover_pose = {-8, 0, 0};
    CraterSpec c{"c", {2, 1}, 6.0, 1.2, 0.1};
    SceneTruth a = synthesize_scene({c}, p, 99);
    SceneTruth b = synthesize_scene({c}, p, 99);
    CHECK(a.heightfield.elevation == b.heightfield.elevation);
    SceneTruth d = synthesize_scene({c}, p, 100);
    CHECK(a.heightfield.elevation != d.heightfield.elevation);
}

TEST_CASE("ground-truth recoverability: deepest cell near crater center") {
    SceneParams p;
    p.extent = 30;
    p.cell_size = 0.1;
    p.roughness = 0;
    p.rover_pose = {-12, 3, 0};
    CraterSpec c{"c", {3.0, -2.0}, 8.0, 1.6, 0.15};
    SceneTruth s = synthesize_scene({c}, p, 5);
    const HeightField& hf = s.heightfield;
    int best_r = 0, best_c = 0;
    float best = 1e9f;
    for (int r = 0; r < hf.n_rows; ++r)
        for (int col = 0; col < hf.n_cols; ++col)
            if (hf.at(r, col) < best) {
                best = hf.at(r, col);
                best_r = r;
                best_c = col;
            }
    double x = hf.origin_xy.x() + hf.cell_size * (best_c + 0.5);
    double y = hf.origin_xy.y() + hf.cell_size * (best_r + 0.5);
    CHECK(std::abs(x - 3.0) <= hf.cell_size);
    CHECK(std::abs(y - -2.0) <= hf.cell_size);
}

TEST_CASE("rejects invalid scenes") {
    SceneParams p;
    p.extent = 30;
    p.cell_size = 0.1;
    p.roughness = 0;
    p.rover_pose = {-12, 0, 0};
    // Overlapping bowls.
    CHECK_THROWS_AS(synthesize_scene({{"a", {0, 0}, 10, 2, 0.1}, {"b", {6, 0}, 10, 2, 0.1}}, p, 1),
                    SceneError);
    // Crater extending past the footprint.
    CHECK_THROWS_AS(synthesize_scene({{"a", {14, 0}, 10, 2, 0.1}}, p, 1), SceneError);
    // Rover inside a bowl.
    SceneParams pr = p;
    pr.rover_pose = {0.5, 0, 0};
    CHECK_THROWS_AS(synthesize_scene({{"a", {0, 0}, 10, 2, 0.1}}, pr, 1), SceneError);
    // Invariant violations on the spec itself.
    CHECK_THROWS_AS(synthesize_scene({{"a", {0, 0}, -1, 2, 0.1}}, p, 1), SceneError);
    CHECK_THROWS_AS(synthesize_scene({{"a", {0, 0}, 10, 0, 0.0}}, p, 1), SceneError);
    CHECK_THROWS_AS(synthesize_scene({{"a", {0, 0}, 10, 1, 1.5}}, p, 1), SceneError);
}

}  // TEST_SUITE
