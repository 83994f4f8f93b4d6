#include "lunarloc/stereo_detector.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace lunarloc {

DisparityPlane fit_disparity_plane(const DisparityMap& dmap, int min_valid_pixels) {
    struct Px {
        double x, y, d;
        double w = 1.0;
    };
    std::vector<Px> px;
    px.reserve(static_cast<size_t>(dmap.width) * dmap.height / 4);
    for (int v = 0; v < dmap.height; ++v)
        for (int u = 0; u < dmap.width; ++u)
            if (dmap.valid(v, u))
                px.push_back({static_cast<double>(u), static_cast<double>(v),
                              static_cast<double>(dmap.at(v, u))});
    if (static_cast<int>(px.size()) < min_valid_pixels)
        throw DegenerateDisparity("too few valid pixels for plane fit");

    DisparityPlane plane;
    for (int round = 0; round < 4; ++round) {  // LSQ + 3 reweighted rounds
        Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
        Eigen::Vector3d atb = Eigen::Vector3d::Zero();
        for (const auto& p : px) {
            Eigen::Vector3d row(p.x, p.y, 1.0);
            ata += p.w * row * row.transpose();
            atb += p.w * row * p.d;
        }
        Eigen::FullPivLU<Eigen::Matrix3d> lu(ata);
        if (lu.rank() < 3) throw DegenerateDisparity("rank-deficient disparity plane fit");
        Eigen::Vector3d abd = lu.solve(atb);
        plane.A = abd(0);
        plane.B = abd(1);
        plane.D = abd(2);
        plane.C = -1.0;

        std::vector<double> absres(px.size());
        for (size_t i = 0; i < px.size(); ++i)
            absres[i] = std::abs(px[i].d - plane.predict(px[i].x, px[i].y));
        std::vector<double> tmp = absres;
        std::nth_element(tmp.begin(), tmp.begin() + static_cast<long>(tmp.size() / 2), tmp.end());
        double scale = std::max(1.4826 * tmp[tmp.size() / 2], 1e-9);
        double sum2 = 0;
        for (size_t i = 0; i < px.size(); ++i) {
            double r = absres[i] / scale;
            px[i].w = 1.0 / (1.0 + r * r);
            sum2 += absres[i] * absres[i];
        }
        plane.residual_rms = std::sqrt(sum2 / static_cast<double>(px.size()));
    }
    return plane;
}

ResidualMap compute_residual_map(const DisparityMap& dmap, const DisparityPlane& plane) {
    ResidualMap rmap;
    rmap.width = dmap.width;
    rmap.height = dmap.height;
    rmap.residual.assign(static_cast<size_t>(dmap.width) * dmap.height,
                         std::numeric_limits<float>::quiet_NaN());
    for (int v = 0; v < dmap.height; ++v)
        for (int u = 0; u < dmap.width; ++u)
            if (dmap.valid(v, u))
                rmap.at(v, u) = static_cast<float>(dmap.at(v, u) - plane.predict(u, v));
    return rmap;
}

namespace {

// Connected-component labeling (4-connectivity) over a boolean mask.
std::vector<int> label_components(const std::vector<uint8_t>& mask, int width, int height,
                                  int& n_labels) {
    std::vector<int> labels(mask.size(), -1);
    n_labels = 0;
    std::deque<std::pair<int, int>> queue;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            size_t idx = static_cast<size_t>(v) * width + u;
            if (!mask[idx] || labels[idx] >= 0) continue;
            int label = n_labels++;
            labels[idx] = label;
            queue.push_back({u, v});
            while (!queue.empty()) {
                auto [cu, cv] = queue.front();
                queue.pop_front();
                const int du[4] = {1, -1, 0, 0};
                const int dv[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    int nu = cu + du[k], nv = cv + dv[k];
                    if (nu < 0 || nu >= width || nv < 0 || nv >= height) continue;
                    size_t nidx = static_cast<size_t>(nv) * width + nu;
                    if (mask[nidx] && labels[nidx] < 0) {
                        labels[nidx] = label;
                        queue.push_back({nu, nv});
                    }
                }
            }
        }
    }
    return labels;
}

}  // namespace

std::vector<FarWallRegion> find_farwall_regions(const ResidualMap& rmap,
                                                const StereoDetectorConfig& cfg) {
    const int W = rmap.width, H = rmap.height;
    std::vector<uint8_t> mask(static_cast<size_t>(W) * H, 0);
    const int win = cfg.segment_window;

    // Per column: sliding linear fit of residual against height-up-the-image
    // over runs of contiguous valid pixels.
    parallel_for(cfg.exec, W, [&](int64_t u) {
        int run_start = -1;
        auto process_run = [&](int v_lo, int v_hi) {  // inclusive, v_lo < v_hi (top..bottom)
            int n = v_hi - v_lo + 1;
            if (n < win) return;
            // x = (H - v) so slope is "per pixel up the image".
            double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
            auto xval = [&](int v) { return static_cast<double>(H - v); };
            auto yval = [&](int v) { return static_cast<double>(rmap.at(v, static_cast<int>(u))); };
            for (int v = v_hi; v > v_hi - win; --v) {
                double x = xval(v), y = yval(v);
                sx += x; sy += y; sxx += x * x; sxy += x * y; syy += y * y;
            }
            for (int v_top = v_hi - win + 1;; --v_top) {
                // Window covers rows [v_top, v_top + win - 1].
                double nwin = win;
                double denom = nwin * sxx - sx * sx;
                if (denom > 1e-9) {
                    double slope = (nwin * sxy - sx * sy) / denom;
                    double intercept = (sy - slope * sx) / nwin;
                    double sse = syy - 2 * slope * sxy - 2 * intercept * sy + slope * slope * sxx +
                                 2 * slope * intercept * sx + nwin * intercept * intercept;
                    double rms = std::sqrt(std::max(0.0, sse / nwin));
                    if (slope >= cfg.slope_min && slope <= cfg.slope_max && rms <= cfg.lin_tol) {
                        for (int v = v_top; v < v_top + win; ++v)
                            mask[static_cast<size_t>(v) * W + u] = 1;
                    }
                }
                if (v_top == v_lo) break;
                // Slide the window up by one row.
                int v_in = v_top - 1, v_out = v_top + win - 1;
                double xi = xval(v_in), yi = yval(v_in);
                double xo = xval(v_out), yo = yval(v_out);
                sx += xi - xo; sy += yi - yo;
                sxx += xi * xi - xo * xo;
                sxy += xi * yi - xo * yo;
                syy += yi * yi - yo * yo;
            }
        };
        for (int v = 0; v <= H; ++v) {
            bool valid = v < H && rmap.valid(v, static_cast<int>(u));
            if (valid && run_start < 0) run_start = v;
            if (!valid && run_start >= 0) {
                process_run(run_start, v - 1);
                run_start = -1;
            }
        }
    });

    int n_labels = 0;
    std::vector<int> labels = label_components(mask, W, H, n_labels);
    std::vector<FarWallRegion> regions(static_cast<size_t>(n_labels));
    std::vector<int> count(static_cast<size_t>(n_labels), 0);
    std::vector<float> rmin(static_cast<size_t>(n_labels), 1e9f);
    std::vector<float> rmax(static_cast<size_t>(n_labels), -1e9f);
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            int l = labels[static_cast<size_t>(v) * W + u];
            if (l < 0) continue;
            auto& reg = regions[static_cast<size_t>(l)];
            if (count[static_cast<size_t>(l)] == 0) {
                reg.col_min = reg.col_max = u;
                reg.row_min = reg.row_max = v;
            } else {
                reg.col_min = std::min(reg.col_min, u);
                reg.col_max = std::max(reg.col_max, u);
                reg.row_min = std::min(reg.row_min, v);
                reg.row_max = std::max(reg.row_max, v);
            }
            reg.pixels.push_back({u, v});
            ++count[static_cast<size_t>(l)];
            float r = rmap.at(v, u);
            rmin[static_cast<size_t>(l)] = std::min(rmin[static_cast<size_t>(l)], r);
            rmax[static_cast<size_t>(l)] = std::max(rmax[static_cast<size_t>(l)], r);
        }
    }
    std::vector<FarWallRegion> out;
    for (int l = 0; l < n_labels; ++l) {
        if (count[static_cast<size_t>(l)] < cfg.min_region_px) continue;
        // Far walls sit below the fitted plane and span a real depth swing.
        if (rmax[static_cast<size_t>(l)] - rmin[static_cast<size_t>(l)] < cfg.min_depth_px)
            continue;
        if (rmin[static_cast<size_t>(l)] >= 0.0f) continue;
        auto& reg = regions[static_cast<size_t>(l)];
        reg.column_extent.assign(static_cast<size_t>(reg.col_max - reg.col_min + 1),
                                 {INT32_MAX, -1});
        for (auto [u, v] : reg.pixels) {
            auto& ext = reg.column_extent[static_cast<size_t>(u - reg.col_min)];
            ext.first = std::min(ext.first, v);
            ext.second = std::max(ext.second, v);
        }
        out.push_back(std::move(reg));
    }
    return out;
}

std::vector<RimContour> find_rim_contours(const ResidualMap& rmap, const DisparityMap& dmap,
                                          const StereoDetectorConfig& cfg) {
    const int W = rmap.width, H = rmap.height;
    const int max_gap = 10;  // invalid run the jump may bridge
    std::vector<uint8_t> mask(static_cast<size_t>(W) * H, 0);
    std::vector<float> jump(static_cast<size_t>(W) * H, 0.0f);

    parallel_for(cfg.exec, W, [&](int64_t u) {
        for (int v = H - 1; v >= 1; --v) {
            if (!dmap.valid(v, static_cast<int>(u))) continue;
            // Next valid pixel above, across at most max_gap invalid pixels.
            int va = v - 1;
            int gap = 0;
            while (va >= 0 && !dmap.valid(va, static_cast<int>(u)) && gap < max_gap) {
                --va;
                ++gap;
            }
            if (va < 0 || !dmap.valid(va, static_cast<int>(u))) continue;
            // Measure the drop on the plane residual: for planar ground the
            // disparity is affine in (u, v), so the plane's own row gradient
            // would otherwise masquerade as a jump across dropout gaps.
            float drop = rmap.at(va, static_cast<int>(u)) - rmap.at(v, static_cast<int>(u));
            if (drop <= -static_cast<float>(cfg.jump_threshold)) {
                mask[static_cast<size_t>(v) * W + u] = 1;
                jump[static_cast<size_t>(v) * W + u] = -drop;
            }
        }
    });

    // Chain across columns: dilate rows by the chaining tolerance, then CCL.
    std::vector<uint8_t> dilated(mask.size(), 0);
    for (int v = 0; v < H; ++v)
        for (int u = 0; u < W; ++u)
            if (mask[static_cast<size_t>(v) * W + u])
                for (int dv = -cfg.contour_row_tol; dv <= cfg.contour_row_tol; ++dv) {
                    int vv = v + dv;
                    if (vv >= 0 && vv < H) dilated[static_cast<size_t>(vv) * W + u] = 1;
                }
    int n_labels = 0;
    std::vector<int> labels = label_components(dilated, W, H, n_labels);

    std::vector<RimContour> contours(static_cast<size_t>(n_labels));
    std::vector<double> jump_sum(static_cast<size_t>(n_labels), 0);
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            size_t idx = static_cast<size_t>(v) * W + u;
            if (!mask[idx]) continue;
            int l = labels[idx];
            contours[static_cast<size_t>(l)].pixels.push_back({u, v});
            jump_sum[static_cast<size_t>(l)] += jump[idx];
        }
    }
    std::vector<RimContour> out;
    for (int l = 0; l < n_labels; ++l) {
        auto& c = contours[static_cast<size_t>(l)];
        if (c.pixels.empty()) continue;
        std::unordered_set<int> cols;
        for (auto [u, v] : c.pixels) cols.insert(u);
        if (static_cast<int>(cols.size()) < cfg.min_contour_px) continue;
        c.mean_jump = jump_sum[static_cast<size_t>(l)] / static_cast<double>(c.pixels.size());
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<CraterDetection> pair_and_estimate(const std::vector<FarWallRegion>& regions,
                                               const std::vector<RimContour>& contours,
                                               const DisparityMap& dmap,
                                               const StereoConfig& stereo_cfg,
                                               const CameraModel& camera,
                                               const StereoDetectorConfig& cfg) {
    std::vector<CraterDetection> out;
    for (const auto& contour : contours) {
        // Per-column contour row (lowest pixel = ground side of the jump).
        std::unordered_map<int, int> contour_row;
        for (auto [u, v] : contour.pixels) {
            auto it = contour_row.find(u);
            if (it == contour_row.end() || v > it->second) contour_row[u] = v;
        }
        const FarWallRegion* best_region = nullptr;
        double best_overlap = 0;
        for (const auto& region : regions) {
            int overlap = 0;
            int above = 0;
            for (const auto& [u, v] : contour_row) {
                if (u < region.col_min || u > region.col_max) continue;
                const auto& ext = region.column_extent[static_cast<size_t>(u - region.col_min)];
                if (ext.second < 0) continue;
                ++overlap;
                if (ext.first < v) ++above;  // region pixels above the rim row
            }
            double frac = static_cast<double>(overlap) /
                          static_cast<double>(contour_row.size());
            if (frac >= cfg.pair_overlap && above >= overlap / 2 && frac > best_overlap) {
                best_overlap = frac;
                best_region = &region;
            }
        }
        if (!best_region) continue;  // unpaired rims are weak candidates

        // Shared columns, central band.
        std::vector<int> cols;
        for (const auto& [u, v] : contour_row)
            if (u >= best_region->col_min && u <= best_region->col_max &&
                best_region->column_extent[static_cast<size_t>(u - best_region->col_min)].second >= 0)
                cols.push_back(u);
        if (cols.empty()) continue;
        std::sort(cols.begin(), cols.end());
        size_t lo = cols.size() * 2 / 5, hi = cols.size() * 3 / 5;
        if (hi <= lo) hi = lo + 1;

        Vec3 near_sum = Vec3::Zero(), far_sum = Vec3::Zero();
        int n_near = 0, n_far = 0;
        for (size_t k = lo; k < hi && k < cols.size(); ++k) {
            int u = cols[k];
            int vr = contour_row[u];
            // Near rim: first valid disparity at/below the jump (ground side).
            for (int v = vr; v < std::min(dmap.height, vr + 5); ++v) {
                if (dmap.valid(v, u)) {
                    near_sum += camera.triangulate(u + 0.5, v + 0.5, dmap.at(v, u),
                                                   stereo_cfg.baseline);
                    ++n_near;
                    break;
                }
            }
            // Far rim: region top edge.
            int v_top = best_region->column_extent[static_cast<size_t>(u - best_region->col_min)].first;
            if (v_top != INT32_MAX && dmap.valid(v_top, u)) {
                far_sum += camera.triangulate(u + 0.5, v_top + 0.5, dmap.at(v_top, u),
                                              stereo_cfg.baseline);
                ++n_far;
            }
        }
        if (n_near == 0 || n_far == 0) continue;
        Vec3 near_pt = near_sum / n_near;
        Vec3 far_pt = far_sum / n_far;
        Vec2 near_xy(near_pt.x(), near_pt.y());
        Vec2 far_xy(far_pt.x(), far_pt.y());
        CraterDetection det;
        det.center_xy = 0.5 * (near_xy + far_xy);
        det.diameter = (far_xy - near_xy).norm();
        det.score = best_overlap;
        det.method = DetectionMethod::Stereo;
        if (det.diameter < 1.0) continue;
        out.push_back(det);
    }
    return out;
}

std::vector<CraterDetection> detect_stereo(const DisparityMap& dmap,
                                           const StereoConfig& stereo_cfg,
                                           const CameraModel& camera,
                                           const StereoDetectorConfig& cfg) {
    DisparityPlane plane = fit_disparity_plane(dmap, cfg.min_valid_pixels);
    ResidualMap rmap = compute_residual_map(dmap, plane);
    std::vector<FarWallRegion> regions = find_farwall_regions(rmap, cfg);
    std::vector<RimContour> contours = find_rim_contours(rmap, dmap, cfg);
    return pair_and_estimate(regions, contours, dmap, stereo_cfg, camera, cfg);
}

}  // namespace lunarloc
