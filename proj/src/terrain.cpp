#include "lunarloc/terrain.hpp"

#include <algorithm>
#include <cmath>

#include "lunarloc/rng.hpp"

namespace lunarloc {

double HeightField::sample(double x, double y) const {
    // Sample positions relative to cell centers.
    double fx = (x - origin_xy.x()) / cell_size - 0.5;
    double fy = (y - origin_xy.y()) / cell_size - 0.5;
    fx = std::clamp(fx, 0.0, static_cast<double>(n_cols - 1));
    fy = std::clamp(fy, 0.0, static_cast<double>(n_rows - 1));
    int c0 = std::min(static_cast<int>(fx), n_cols - 2);
    int r0 = std::min(static_cast<int>(fy), n_rows - 2);
    c0 = std::max(c0, 0);
    r0 = std::max(r0, 0);
    double tx = fx - c0;
    double ty = fy - r0;
    double v00 = at(r0, c0), v01 = at(r0, c0 + 1);
    double v10 = at(r0 + 1, c0), v11 = at(r0 + 1, c0 + 1);
    return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
}

double crater_profile(const CraterSpec& spec, double r) {
    const double R = spec.radius();
    const double D = spec.diameter;
    if (r >= D) return 0.0;
    if (r <= R) {
        // Sphere through the rim circle (z = rim_height at r = R) with its
        // lowest point at z = -depth.
        const double h = spec.depth + spec.rim_height;  // rim-to-floor
        const double s = (R * R + h * h) / (2.0 * h);   // sphere radius
        const double cz = s - spec.depth;               // sphere center height
        return cz - std::sqrt(std::max(0.0, s * s - r * r));
    }
    // Rim annulus: cubic decay from rim_height at R to 0 at D, flat at both ends.
    const double t = (r - R) / (D - R);
    return spec.rim_height * (1.0 - t * t * (3.0 - 2.0 * t));
}

namespace {

double value_noise(uint64_t seed, double x, double y) {
    double ix = std::floor(x), iy = std::floor(y);
    double fx = x - ix, fy = y - iy;
    fx = fx * fx * (3.0 - 2.0 * fx);
    fy = fy * fy * (3.0 - 2.0 * fy);
    auto lattice = [&](double gx, double gy) {
        return rng::uniform(rng::mix(seed, static_cast<uint64_t>(static_cast<int64_t>(gx) + (1 << 20)),
                                     static_cast<uint64_t>(static_cast<int64_t>(gy) + (1 << 20)))) -
               0.5;
    };
    double a = lattice(ix, iy), b = lattice(ix + 1, iy);
    double c = lattice(ix, iy + 1), d = lattice(ix + 1, iy + 1);
    return a + (b - a) * fx + (c - a) * fy + (a - b - c + d) * fx * fy;
}

// Octaved value noise, base wavelength 1 m, scaled afterwards to the target RMS.
double fractal_noise(uint64_t seed, double x, double y) {
    double v = 0.0, amp = 1.0, freq = 1.0;
    for (int o = 0; o < 4; ++o) {
        v += amp * value_noise(rng::mix(seed, o), x * freq, y * freq);
        amp *= 0.5;
        freq *= 2.0;
    }
    return v;
}

}  // namespace

SceneTruth synthesize_scene(const std::vector<CraterSpec>& craters, const SceneParams& params,
                            uint64_t seed) {
    const double half = 0.5 * params.extent;
    for (const auto& c : craters) {
        if (c.diameter <= 0 || c.depth <= 0 || c.depth > c.diameter || c.rim_height < 0 ||
            c.rim_height >= c.depth)
            throw SceneError("invalid crater spec '" + c.id + "'");
        if (std::abs(c.center_xy.x()) + c.radius() > half ||
            std::abs(c.center_xy.y()) + c.radius() > half)
            throw SceneError("crater '" + c.id + "' extends past the footprint");
    }
    for (size_t i = 0; i < craters.size(); ++i) {
        for (size_t j = i + 1; j < craters.size(); ++j) {
            double d = (craters[i].center_xy - craters[j].center_xy).norm();
            if (d < craters[i].radius() + craters[j].radius())
                throw SceneError("overlapping crater bowls '" + craters[i].id + "' and '" +
                                 craters[j].id + "'");
        }
    }
    for (const auto& c : craters) {
        double d = (c.center_xy - Vec2(params.rover_pose.x, params.rover_pose.y)).norm();
        if (d <= c.radius() + 1.0)
            throw SceneError("rover pose inside crater bowl '" + c.id + "'");
    }

    SceneTruth scene;
    scene.seed = seed;
    scene.rover_pose = params.rover_pose;
    scene.craters = craters;

    HeightField& hf = scene.heightfield;
    hf.cell_size = params.cell_size;
    hf.n_cols = static_cast<int>(std::ceil(params.extent / params.cell_size));
    hf.n_rows = hf.n_cols;
    hf.origin_xy = Vec2(-half, -half);
    hf.elevation.assign(static_cast<size_t>(hf.n_rows) * hf.n_cols, 0.0f);

    std::vector<double> noise;
    double noise_rms = 0.0;
    if (params.roughness > 0) {
        noise.resize(hf.elevation.size());
        double sum2 = 0.0;
        for (int r = 0; r < hf.n_rows; ++r) {
            double y = hf.origin_xy.y() + (r + 0.5) * hf.cell_size;
            for (int c = 0; c < hf.n_cols; ++c) {
                double x = hf.origin_xy.x() + (c + 0.5) * hf.cell_size;
                double v = fractal_noise(seed, x, y);
                noise[static_cast<size_t>(r) * hf.n_cols + c] = v;
                sum2 += v * v;
            }
        }
        noise_rms = std::sqrt(sum2 / static_cast<double>(noise.size()));
        if (noise_rms < 1e-12) noise_rms = 1.0;
    }

    for (int r = 0; r < hf.n_rows; ++r) {
        double y = hf.origin_xy.y() + (r + 0.5) * hf.cell_size;
        for (int c = 0; c < hf.n_cols; ++c) {
            double x = hf.origin_xy.x() + (c + 0.5) * hf.cell_size;
            double z = 0.0;
            if (!noise.empty())
                z += params.roughness / noise_rms * noise[static_cast<size_t>(r) * hf.n_cols + c];
            for (const auto& cr : craters) {
                double rr = (Vec2(x, y) - cr.center_xy).norm();
                if (rr < cr.diameter) z += crater_profile(cr, rr);
            }
            hf.at(r, c) = static_cast<float>(z);
        }
    }
    return scene;
}

}  // namespace lunarloc
