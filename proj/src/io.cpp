#include "lunarloc/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace lunarloc::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw IoError(path + ": " + what);
}

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void write_ply(const std::string& path, const PointCloud& cloud, PlyFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "ply\n";
    out << "format "
        << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
    out << "comment sensor_origin " << cloud.sensor_origin.x() << " " << cloud.sensor_origin.y()
        << " " << cloud.sensor_origin.z() << "\n";
    out << "comment frame " << (cloud.frame == Frame::Sensor ? "sensor" : "site") << "\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "end_header\n";
    if (format == PlyFormat::Ascii) {
        for (const auto& p : cloud.points)
            out << static_cast<float>(p.x()) << " " << static_cast<float>(p.y()) << " "
                << static_cast<float>(p.z()) << "\n";
    } else {
        for (const auto& p : cloud.points) {
            float v[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
            out.write(reinterpret_cast<const char*>(v), sizeof(v));
        }
    }
    if (!out) fail(path, "write failed");
}

PointCloud read_ply(const std::string& path) {
    const std::string data = read_all(path);
    size_t pos = 0;
    auto next_line = [&]() -> std::string {
        size_t eol = data.find('\n', pos);
        if (eol == std::string::npos)
            fail(path, "unterminated header line at byte " + std::to_string(pos));
        std::string line = data.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = eol + 1;
        return line;
    };

    if (next_line() != "ply") fail(path, "not a PLY file (byte 0)");
    PointCloud cloud;
    bool binary = false;
    size_t n_vertices = 0;
    int xyz_props = 0;
    bool header_done = false;
    while (!header_done) {
        size_t line_start = pos;
        std::string line = next_line();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "ascii")
                binary = false;
            else if (fmt == "binary_little_endian")
                binary = true;
            else
                fail(path, "unsupported format '" + fmt + "' at byte " +
                               std::to_string(line_start));
        } else if (tok == "comment") {
            std::string key;
            ss >> key;
            if (key == "sensor_origin") {
                double x, y, z;
                if (!(ss >> x >> y >> z))
                    fail(path, "malformed sensor_origin comment at byte " +
                                   std::to_string(line_start));
                cloud.sensor_origin = Vec3(x, y, z);
            } else if (key == "frame") {
                std::string f;
                ss >> f;
                cloud.frame = (f == "site") ? Frame::Site : Frame::Sensor;
            }
        } else if (tok == "element") {
            std::string name;
            ss >> name >> n_vertices;
            if (name != "vertex")
                fail(path, "unsupported element '" + name + "' at byte " +
                               std::to_string(line_start));
        } else if (tok == "property") {
            std::string type, name;
            ss >> type >> name;
            if ((name == "x" || name == "y" || name == "z")) {
                if (type != "float" && type != "float32")
                    fail(path, "property " + name + " must be float, got '" + type +
                                   "' at byte " + std::to_string(line_start));
                ++xyz_props;
            }
        } else if (tok == "end_header") {
            header_done = true;
        } else if (tok != "ply") {
            fail(path, "unknown header token '" + tok + "' at byte " + std::to_string(line_start));
        }
    }
    if (xyz_props != 3) fail(path, "missing x/y/z float properties");

    cloud.points.reserve(n_vertices);
    if (binary) {
        const size_t need = n_vertices * 3 * sizeof(float);
        if (data.size() - pos < need)
            fail(path, "truncated vertex data at byte " + std::to_string(data.size()) +
                           " (need " + std::to_string(pos + need) + " bytes)");
        for (size_t i = 0; i < n_vertices; ++i) {
            float v[3];
            std::memcpy(v, data.data() + pos, sizeof(v));
            pos += sizeof(v);
            cloud.points.emplace_back(v[0], v[1], v[2]);
        }
    } else {
        std::istringstream body(data.substr(pos));
        for (size_t i = 0; i < n_vertices; ++i) {
            double x, y, z;
            if (!(body >> x >> y >> z)) {
                const auto off = static_cast<long long>(body.tellg());
                fail(path, "malformed vertex " + std::to_string(i) + " near byte " +
                               std::to_string(pos + (off < 0 ? 0 : static_cast<size_t>(off))));
            }
            cloud.points.emplace_back(x, y, z);
        }
    }
    return cloud;
}

void write_heightfield(const std::string& raster_path, const HeightField& hf) {
    {
        std::ofstream out(raster_path, std::ios::binary);
        if (!out) fail(raster_path, "cannot open for writing");
        out.write(reinterpret_cast<const char*>(hf.elevation.data()),
                  static_cast<std::streamsize>(hf.elevation.size() * sizeof(float)));
        if (!out) fail(raster_path, "write failed");
    }
    json meta;
    meta["origin_xy"] = {hf.origin_xy.x(), hf.origin_xy.y()};
    meta["cell_size"] = hf.cell_size;
    meta["n_rows"] = hf.n_rows;
    meta["n_cols"] = hf.n_cols;
    std::ofstream side(raster_path + ".json");
    if (!side) fail(raster_path + ".json", "cannot open for writing");
    side << meta.dump(2) << "\n";
}

HeightField read_heightfield(const std::string& raster_path) {
    json meta = json::parse(read_all(raster_path + ".json"));
    HeightField hf;
    hf.origin_xy = Vec2(meta.at("origin_xy")[0], meta.at("origin_xy")[1]);
    hf.cell_size = meta.at("cell_size");
    hf.n_rows = meta.at("n_rows");
    hf.n_cols = meta.at("n_cols");
    const std::string raw = read_all(raster_path);
    const size_t need = static_cast<size_t>(hf.n_rows) * hf.n_cols * sizeof(float);
    if (raw.size() != need)
        fail(raster_path, "raster size mismatch: got " + std::to_string(raw.size()) +
                              " bytes, expected " + std::to_string(need));
    hf.elevation.resize(static_cast<size_t>(hf.n_rows) * hf.n_cols);
    std::memcpy(hf.elevation.data(), raw.data(), need);
    return hf;
}

void write_scene(const std::string& dir, const std::string& stem, const SceneTruth& scene) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string raster = (fs::path(dir) / (stem + ".f32")).string();
    write_heightfield(raster, scene.heightfield);
    json truth;
    truth["seed"] = scene.seed;
    truth["heightfield"] = stem + ".f32";
    truth["rover_pose"] = {{"x", scene.rover_pose.x},
                           {"y", scene.rover_pose.y},
                           {"heading_rad", scene.rover_pose.heading}};
    truth["craters"] = json::array();
    for (const auto& c : scene.craters) {
        truth["craters"].push_back({{"id", c.id},
                                    {"center_xy", {c.center_xy.x(), c.center_xy.y()}},
                                    {"diameter_m", c.diameter},
                                    {"depth_m", c.depth},
                                    {"rim_height_m", c.rim_height}});
    }
    const std::string tpath = (fs::path(dir) / (stem + ".truth.json")).string();
    std::ofstream out(tpath);
    if (!out) fail(tpath, "cannot open for writing");
    out << truth.dump(2) << "\n";
}

SceneTruth read_scene(const std::string& truth_json_path) {
    namespace fs = std::filesystem;
    json truth = json::parse(read_all(truth_json_path));
    SceneTruth scene;
    scene.seed = truth.at("seed");
    scene.rover_pose.x = truth.at("rover_pose").at("x");
    scene.rover_pose.y = truth.at("rover_pose").at("y");
    scene.rover_pose.heading = truth.at("rover_pose").at("heading_rad");
    for (const auto& c : truth.at("craters")) {
        CraterSpec spec;
        spec.id = c.at("id");
        spec.center_xy = Vec2(c.at("center_xy")[0], c.at("center_xy")[1]);
        spec.diameter = c.at("diameter_m");
        spec.depth = c.at("depth_m");
        spec.rim_height = c.at("rim_height_m");
        scene.craters.push_back(spec);
    }
    const fs::path raster = fs::path(truth_json_path).parent_path() /
                            truth.at("heightfield").get<std::string>();
    scene.heightfield = read_heightfield(raster.string());
    return scene;
}

}  // namespace lunarloc::io
