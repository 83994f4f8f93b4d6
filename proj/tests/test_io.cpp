#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lunarloc/io.hpp"
#include "lunarloc/rng.hpp"

using namespace lunarloc;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    fs::path p = fs::temp_directory_path() / "lunarloc_io_tests";
    fs::create_directories(p);
    return p;
}

PointCloud sample_cloud() {
    PointCloud c;
    c.frame = Frame::Site;
    c.sensor_origin = Vec3(1.5, -2.25, 3.0);
    for (int i = 0; i < 100; ++i)
        c.points.emplace_back(rng::uniform(rng::mix(9, i, 0)), rng::uniform(rng::mix(9, i, 1)),
                              rng::uniform(rng::mix(9, i, 2)));
    return c;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("PLY round trip, both formats") {
    for (auto fmt : {io::PlyFormat::Ascii, io::PlyFormat::BinaryLittleEndian}) {
        PointCloud c = sample_cloud();
        fs::path p = tmpdir() / "cloud.ply";
        io::write_ply(p.string(), c, fmt);
        PointCloud r = io::read_ply(p.string());
        REQUIRE(r.size() == c.size());
        CHECK(r.frame == c.frame);
        CHECK((r.sensor_origin - c.sensor_origin).norm() < 1e-6);
        for (size_t i = 0; i < c.size(); ++i)
            CHECK((r.points[i] - c.points[i]).norm() < 1e-6);  // float32 storage
    }
}

TEST_CASE("PLY parse error names a byte offset") {
    fs::path p = tmpdir() / "bad.ply";
    {
        std::ofstream out(p);
        out << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
               "property float z\nend_header\n0 0 0\n1 bogus 1\n";
    }
    try {
        io::read_ply(p.string());
        FAIL("expected parse error");
    } catch (const io::IoError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("heightfield round trip") {
    HeightField hf;
    hf.origin_xy = Vec2(-3, 2);
    hf.cell_size = 0.25;
    hf.n_rows = 8;
    hf.n_cols = 12;
    hf.elevation.resize(96);
    for (size_t i = 0; i < hf.elevation.size(); ++i)
        hf.elevation[i] = static_cast<float>(rng::uniform(rng::mix(10, i)));
    fs::path p = tmpdir() / "hf.f32";
    io::write_heightfield(p.string(), hf);
    HeightField r = io::read_heightfield(p.string());
    CHECK(r.origin_xy == hf.origin_xy);
    CHECK(r.cell_size == hf.cell_size);
    CHECK(r.n_rows == hf.n_rows);
    CHECK(r.n_cols == hf.n_cols);
    CHECK(r.elevation == hf.elevation);
}

TEST_CASE("scene round trip") {
    SceneParams params;
    params.extent = 20;
    params.cell_size = 0.25;
    params.roughness = 0.03;
    params.rover_pose = {-8, 1, 0.3};
    SceneTruth s = synthesize_scene({{"crater-1", {2, -1}, 6.0, 1.2, 0.1}}, params, 77);
    fs::path dir = tmpdir();
    io::write_scene(dir.string(), "scene", s);
    SceneTruth r = io::read_scene((dir / "scene.truth.json").string());
    CHECK(r.seed == s.seed);
    CHECK(r.rover_pose.x == s.rover_pose.x);
    CHECK(r.rover_pose.heading == s.rover_pose.heading);
    REQUIRE(r.craters.size() == 1);
    CHECK(r.craters[0].id == "crater-1");
    CHECK(r.craters[0].diameter == 6.0);
    CHECK(r.heightfield.elevation == s.heightfield.elevation);
}

TEST_CASE("missing file errors name the path") {
    try {
        io::read_ply("/nonexistent/nope.ply");
        FAIL("expected error");
    } catch (const io::IoError& e) {
        CHECK(std::string(e.what()).find("nope.ply") != std::string::npos);
    }
}

}  // TEST_SUITE
