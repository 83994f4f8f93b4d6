#include "lunarloc/landmark_db.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "lunarloc/io.hpp"
#include "lunarloc/rng.hpp"

namespace lunarloc {

using nlohmann::json;

LandmarkDb::LandmarkDb(std::vector<LandmarkRecord> records, double grid_cell)
    : records_(std::move(records)), grid_cell_(grid_cell) {
    for (int i = 0; i < static_cast<int>(records_.size()); ++i) {
        const auto& r = records_[static_cast<size_t>(i)];
        auto gx = static_cast<int32_t>(std::floor(r.position.x() / grid_cell_));
        auto gy = static_cast<int32_t>(std::floor(r.position.y() / grid_cell_));
        grid_[key(gx, gy)].push_back(i);
    }
}

std::vector<LandmarkRecord> LandmarkDb::query_radius(const Vec2& center, double radius,
                                                     double diam_min, double diam_max) const {
    std::vector<LandmarkRecord> out;
    const auto gx0 = static_cast<int32_t>(std::floor((center.x() - radius) / grid_cell_));
    const auto gx1 = static_cast<int32_t>(std::floor((center.x() + radius) / grid_cell_));
    const auto gy0 = static_cast<int32_t>(std::floor((center.y() - radius) / grid_cell_));
    const auto gy1 = static_cast<int32_t>(std::floor((center.y() + radius) / grid_cell_));
    const double r2 = radius * radius;
    for (int32_t gy = gy0; gy <= gy1; ++gy) {
        for (int32_t gx = gx0; gx <= gx1; ++gx) {
            auto it = grid_.find(key(gx, gy));
            if (it == grid_.end()) continue;
            for (int i : it->second) {
                const auto& r = records_[static_cast<size_t>(i)];
                if ((r.position - center).squaredNorm() <= r2 && r.diameter >= diam_min &&
                    r.diameter <= diam_max)
                    out.push_back(r);
            }
        }
    }
    return out;
}

void LandmarkDb::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw io::IoError(path + ": cannot open for writing");
    for (const auto& r : records_) {
        json j = {{"id", r.id},
                  {"x_m", r.position.x()},
                  {"y_m", r.position.y()},
                  {"diameter_m", r.diameter},
                  {"depth_m", r.depth}};
        out << j.dump() << "\n";
    }
}

LandmarkDb LandmarkDb::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io::IoError(path + ": cannot open");
    std::vector<LandmarkRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw io::IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        LandmarkRecord r;
        r.id = j.at("id");
        r.position = Vec2(j.at("x_m"), j.at("y_m"));
        r.diameter = j.at("diameter_m");
        r.depth = j.at("depth_m");
        records.push_back(std::move(r));
    }
    return LandmarkDb(std::move(records));
}

LandmarkDb db_from_scene(const SceneTruth& scene, double position_noise_sigma, uint64_t seed) {
    std::vector<LandmarkRecord> records;
    records.reserve(scene.craters.size());
    for (size_t i = 0; i < scene.craters.size(); ++i) {
        const auto& c = scene.craters[i];
        LandmarkRecord r;
        r.id = c.id;
        r.position = c.center_xy;
        if (position_noise_sigma > 0) {
            r.position.x() += position_noise_sigma * rng::gaussian(rng::mix(seed, 0xdb, i, 0));
            r.position.y() += position_noise_sigma * rng::gaussian(rng::mix(seed, 0xdb, i, 1));
        }
        r.diameter = c.diameter;
        r.depth = c.depth;
        records.push_back(std::move(r));
    }
    return LandmarkDb(std::move(records));
}

}  // namespace lunarloc
