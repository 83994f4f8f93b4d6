#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lunarloc/landmark_db.hpp"
#include "lunarloc/rng.hpp"

using namespace lunarloc;

TEST_SUITE("landmark_db") {

TEST_CASE("radius zero at an exact position returns that record") {
    LandmarkDb db({{"a", {10, 20}, 8, 1.6}, {"b", {-5, 3}, 12, 2.4}});
    auto r = db.query_radius({10, 20}, 0.0);
    REQUIRE(r.size() == 1);
    CHECK(r[0].id == "a");
}

TEST_CASE("query_radius matches brute force on 10^4 records x 100 queries") {
    std::vector<LandmarkRecord> recs;
    for (int i = 0; i < 10000; ++i)
        recs.push_back({"r" + std::to_string(i),
                        {2000 * rng::uniform(rng::mix(21, i, 0)) - 1000,
                         2000 * rng::uniform(rng::mix(21, i, 1)) - 1000},
                        5 + 15 * rng::uniform(rng::mix(21, i, 2)),
                        1 + rng::uniform(rng::mix(21, i, 3))});
    LandmarkDb db(recs);
    for (int q = 0; q < 100; ++q) {
        Vec2 c(2000 * rng::uniform(rng::mix(22, q, 0)) - 1000,
               2000 * rng::uniform(rng::mix(22, q, 1)) - 1000);
        double radius = 150 * rng::uniform(rng::mix(22, q, 2));
        double dmin = 5, dmax = 20;
        auto got = db.query_radius(c, radius, dmin, dmax);
        size_t brute = 0;
        for (const auto& r : recs)
            if ((r.position - c).norm() <= radius && r.diameter >= dmin && r.diameter <= dmax)
                ++brute;
        CHECK(got.size() == brute);
        for (const auto& r : got) {
            CHECK((r.position - c).norm() <= radius);
            CHECK(r.diameter >= dmin);
            CHECK(r.diameter <= dmax);
        }
    }
}

TEST_CASE("db_from_scene: zero noise copies truth; noisy RMS matches sigma") {
    SceneParams p;
    p.extent = 2500;
    p.cell_size = 10;  // coarse: only crater placement matters here
    p.roughness = 0;
    p.rover_pose = {-1200, -1200, 0};
    std::vector<CraterSpec> craters;
    for (int i = 0; i < 1000; ++i) {
        double x = -1100 + 70.0 * (i % 32);
        double y = -1100 + 70.0 * (i / 32);
        craters.push_back({"c" + std::to_string(i), {x, y}, 10, 2, 0.2});
    }
    SceneTruth scene;
    scene.craters = craters;  // db_from_scene reads craters only

    LandmarkDb exact = db_from_scene(scene, 0.0, 3);
    REQUIRE(exact.size() == craters.size());
    for (size_t i = 0; i < craters.size(); ++i) {
        CHECK(exact.records()[i].position == craters[i].center_xy);
        CHECK(exact.records()[i].diameter == craters[i].diameter);
    }

    LandmarkDb noisy = db_from_scene(scene, 0.5, 3);
    double sx = 0, sy = 0;
    for (size_t i = 0; i < craters.size(); ++i) {
        Vec2 d = noisy.records()[i].position - craters[i].center_xy;
        sx += d.x() * d.x();
        sy += d.y() * d.y();
    }
    double n = static_cast<double>(craters.size());
    CHECK(std::sqrt(sx / n) > 0.45);
    CHECK(std::sqrt(sx / n) < 0.55);
    CHECK(std::sqrt(sy / n) > 0.45);
    CHECK(std::sqrt(sy / n) < 0.55);
}

TEST_CASE("jsonl round trip") {
    LandmarkDb db({{"a", {10.25, -20.5}, 8, 1.6}, {"b", {-5, 3}, 12.5, 2.4}});
    std::string path = "/tmp/lunarloc_db_test.jsonl";
    db.save_jsonl(path);
    LandmarkDb r = LandmarkDb::load_jsonl(path);
    REQUIRE(r.size() == 2);
    CHECK(r.records()[0].id == "a");
    CHECK(r.records()[0].position == Vec2(10.25, -20.5));
    CHECK(r.records()[1].diameter == 12.5);
}

TEST_CASE("jsonl parse errors name the line") {
    std::string path = "/tmp/lunarloc_db_bad.jsonl";
    {
        std::ofstream out(path);
        out << R"({"id":"a","x_m":1,"y_m":2,"diameter_m":8,"depth_m":1.6})" << "\n";
        out << "this is not json\n";
    }
    try {
        LandmarkDb::load_jsonl(path);
        FAIL("expected parse error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

}  // TEST_SUITE
