#include "densityscan/detect.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "densityscan/errors.hpp"
#include "densityscan/parallel.hpp"

namespace densityscan::detect {

double WindowScorer::score_at(const dataio::ImageGray& image, Vec2 center, int size) const {
    if (size > image.width || size > image.height)
        throw InvalidArgument("window of size " + std::to_string(size) + " does not fit the image");
    const auto snap = [size](double c, int extent) {
        const long v = std::lround(c - 0.5 * size);
        return static_cast<int>(std::clamp<long>(v, 0, extent - size));
    };
    return score(image, Window{snap(center.x, image.width), snap(center.y, image.height), size});
}

double CnnScorer::score(const dataio::ImageGray& image, const Window& window) const {
    return model::forward(model_, dataio::crop_resize(image, window, static_cast<int>(density::kCanonicalSize)));
}

AnalyticScorer::AnalyticScorer(density::ObjectDistribution truth, double band)
    : truth_(std::move(truth)), tau_(2.0 * std::log1p(band)) {
    if (!(band > 0.0)) throw InvalidArgument("band must be positive");
}

double AnalyticScorer::response(Vec2 center, double size) const {
    double v = 0.0;
    for (const auto& c : truth_.components) {
        const double r = density::canonical_beta(c.beta, size) / density::kCanonicalBeta;
        const double lr = std::log(r);
        v += std::exp(-0.5 * c.beta * squared_norm(center - c.mu)) * std::exp(-lr * lr / (2.0 * tau_ * tau_));
    }
    return v;
}

double AnalyticScorer::score(const dataio::ImageGray& image, const Window& window) const {
    if (!window.inside(image.width, image.height)) throw InvalidArgument("window outside the image");
    return response(window.center(), window.size);
}

// The analytic field is defined everywhere, so no snapping.
double AnalyticScorer::score_at(const dataio::ImageGray&, Vec2 center, int size) const {
    return response(center, size);
}

DensityField assemble_field(const WindowScorer& scorer, const dataio::ImageGray& image,
                            const std::vector<Window>& windows) {
    DensityField field;
    field.image_width = image.width;
    field.image_height = image.height;

    std::map<int, std::vector<std::size_t>> by_size;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!windows[i].inside(image.width, image.height))
            throw InvalidArgument("window (" + std::to_string(windows[i].x) + ", " + std::to_string(windows[i].y) +
                                  ", " + std::to_string(windows[i].size) + ") lies outside the image");
        by_size[windows[i].size].push_back(i);
    }

    struct Slot {
        std::size_t grid;
        std::size_t cell;
    };
    std::vector<Slot> slots(windows.size());
    for (const auto& [size, idx] : by_size) {
        int x0 = windows[idx[0]].x, x1 = x0, y0 = windows[idx[0]].y, y1 = y0;
        for (auto i : idx) {
            x0 = std::min(x0, windows[i].x);
            x1 = std::max(x1, windows[i].x);
            y0 = std::min(y0, windows[i].y);
            y1 = std::max(y1, windows[i].y);
        }
        int stride = 0;
        for (auto i : idx) stride = std::gcd(stride, std::gcd(windows[i].x - x0, windows[i].y - y0));
        if (stride == 0) stride = 1;

        ScaleGrid g;
        g.size = size;
        g.stride = stride;
        g.origin = {x0 + 0.5 * size, y0 + 0.5 * size};
        g.cols = (x1 - x0) / stride + 1;
        g.rows = (y1 - y0) / stride + 1;
        g.values.assign(static_cast<std::size_t>(g.rows) * g.cols, 0.0);
        for (auto i : idx) {
            const auto r = static_cast<std::size_t>((windows[i].y - y0) / stride);
            const auto c = static_cast<std::size_t>((windows[i].x - x0) / stride);
            slots[i] = {field.scales.size(), r * g.cols + c};
        }
        field.scales.push_back(std::move(g));
    }

    std::vector<double> scores(windows.size());
    parallel_for(windows.size(), [&](std::size_t i) { scores[i] = scorer.score(image, windows[i]); });
    for (std::size_t i = 0; i < windows.size(); ++i) field.scales[slots[i].grid].values[slots[i].cell] = scores[i];
    return field;
}

DensityField assemble_field(const model::CnnModel& model, const dataio::ImageGray& image,
                            const std::vector<Window>& windows) {
    return assemble_field(CnnScorer(model), image, windows);
}

double beta_for_window(int window_size) {
    if (window_size <= 0) throw InvalidArgument("window size must be positive");
    const double k = density::kCanonicalSize / window_size;
    return density::kCanonicalBeta * k * k;
}

namespace {

struct CellRef {
    std::size_t grid;
    int row;
    int col;
    double value;
    std::size_t order;  // global index, lower wins ties
};

bool beats(double va, std::size_t oa, double vb, std::size_t ob) { return va > vb || (va == vb && oa < ob); }

}  // namespace

std::vector<Detection> extract_modes(const DensityField& field, double threshold, double min_separation) {
    std::vector<std::size_t> base(field.scales.size() + 1, 0);
    for (std::size_t k = 0; k < field.scales.size(); ++k) base[k + 1] = base[k] + field.scales[k].values.size();

    const auto order_of = [&](std::size_t k, int r, int c) {
        return base[k] + static_cast<std::size_t>(r) * field.scales[k].cols + c;
    };

    std::vector<CellRef> peaks;
    for (std::size_t k = 0; k < field.scales.size(); ++k) {
        const ScaleGrid& g = field.scales[k];
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                const double v = g.at(r, c);
                if (!(v >= threshold)) continue;
                const std::size_t o = order_of(k, r, c);
                bool is_max = true;
                for (int dr = -1; dr <= 1 && is_max; ++dr)
                    for (int dc = -1; dc <= 1 && is_max; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || cc < 0 || rr >= g.rows || cc >= g.cols) continue;
                        if (beats(g.at(rr, cc), order_of(k, rr, cc), v, o)) is_max = false;
                    }
                const Vec2 p = g.center(r, c);
                for (int dk : {-1, 1}) {
                    if (!is_max) break;
                    const auto kk = static_cast<std::ptrdiff_t>(k) + dk;
                    if (kk < 0 || kk >= static_cast<std::ptrdiff_t>(field.scales.size())) continue;
                    const ScaleGrid& h = field.scales[static_cast<std::size_t>(kk)];
                    const double fr = (p.y - h.origin.y) / h.stride;
                    const double fc = (p.x - h.origin.x) / h.stride;
                    const int r0 = std::clamp(static_cast<int>(std::floor(fr)), 0, h.rows - 1);
                    const int r1 = std::clamp(static_cast<int>(std::ceil(fr)), 0, h.rows - 1);
                    const int c0 = std::clamp(static_cast<int>(std::floor(fc)), 0, h.cols - 1);
                    const int c1 = std::clamp(static_cast<int>(std::ceil(fc)), 0, h.cols - 1);
                    for (int rr : {r0, r1})
                        for (int cc : {c0, c1})
                            if (beats(h.at(rr, cc), order_of(static_cast<std::size_t>(kk), rr, cc), v, o)) is_max = false;
                }
                if (is_max) peaks.push_back({k, r, c, v, o});
            }
        }
    }

    std::sort(peaks.begin(), peaks.end(),
              [](const CellRef& a, const CellRef& b) { return beats(a.value, a.order, b.value, b.order); });

    std::vector<Detection> out;
    for (const auto& p : peaks) {
        const ScaleGrid& g = field.scales[p.grid];
        const Vec2 c = g.center(p.row, p.col);
        bool clear = true;
        for (const auto& d : out)
            if (distance(d.center, c) < min_separation) {
                clear = false;
                break;
            }
        if (!clear) continue;
        out.push_back({c, beta_for_window(g.size), p.value, g.size, g.stride});
    }
    return out;
}

double iou(const Box& a, const Box& b) {
    const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
    const double i = inter.area();
    const double u = a.area() + b.area() - i;
    return u > 0.0 ? i / u : 0.0;
}

namespace {
Box square(Vec2 c, double half) { return {c.x - half, c.y - half, c.x + half, c.y + half}; }
}  // namespace

Box detection_box(const Detection& d) {
    if (!(d.beta_px > 0.0)) throw InvalidArgument("detection needs beta_px > 0");
    return square(d.center, 2.0 / std::sqrt(d.beta_px));
}

Box component_box(const density::GaussianComponent& c) { return square(c.mu, 2.0 / std::sqrt(c.beta)); }

Box ellipse_box(const dataio::Ellipse& e) {
    const double ca = std::cos(e.angle_rad), sa = std::sin(e.angle_rad);
    const double hx = std::hypot(e.major_r * ca, e.minor_r * sa);
    const double hy = std::hypot(e.major_r * sa, e.minor_r * ca);
    return {e.cx - hx, e.cy - hy, e.cx + hx, e.cy + hy};
}

Score score_detections(const std::vector<Detection>& detections, const std::vector<Box>& groundtruth,
                       double iou_threshold) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

    std::vector<bool> taken(groundtruth.size(), false);
    Score s;
    for (auto i : order) {
        const Box db = detection_box(detections[i]);
        double best = iou_threshold;
        std::ptrdiff_t best_j = -1;
        for (std::size_t j = 0; j < groundtruth.size(); ++j) {
            if (taken[j]) continue;
            const double v = iou(db, groundtruth[j]);
            if (v >= best && (best_j < 0 || v > best)) {
                best = v;
                best_j = static_cast<std::ptrdiff_t>(j);
            }
        }
        if (best_j >= 0) {
            taken[static_cast<std::size_t>(best_j)] = true;
            ++s.tp;
        } else {
            ++s.fp;
        }
    }
    s.fn = static_cast<int>(groundtruth.size()) - s.tp;
    s.discrete_score = s.tp;
    return s;
}

Score score_detections(const std::vector<Detection>& detections, const std::vector<dataio::Ellipse>& groundtruth,
                       double iou_threshold) {
    std::vector<Box> boxes;
    boxes.reserve(groundtruth.size());
    for (const auto& e : groundtruth) boxes.push_back(ellipse_box(e));
    return score_detections(detections, boxes, iou_threshold);
}

search::FieldOracle field_oracle(const WindowScorer& scorer, const dataio::ImageGray& image, int window_size) {
    const WindowScorer* s = &scorer;
    const dataio::ImageGray* img = &image;
    return [s, img, window_size](Vec2 p) { return s->score_at(*img, p, window_size); };
}

DetectResult detect_objects(const WindowScorer& scorer, const dataio::ImageGray& image, const DetectOptions& opt) {
    DetectResult res;
    const auto windows = search::geometric_windows(image.width, image.height, opt.schedule, opt.stride_fraction);
    res.field = assemble_field(scorer, image, windows);
    res.candidates = extract_modes(res.field, opt.threshold, opt.min_separation);
    if (!opt.justify) {
        res.detections = res.candidates;
        return res;
    }
    std::vector<char> keep(res.candidates.size(), 0);
    parallel_for(res.candidates.size(), [&](std::size_t i) {
        const auto& d = res.candidates[i];
        keep[i] = search::evidence_justify(field_oracle(scorer, image, d.window_size), d, opt.justify_params);
    });
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) res.detections.push_back(res.candidates[i]);
    return res;
}

std::string detections_jsonl(const std::string& image_id, const std::vector<Detection>& detections) {
    std::string out;
    for (const auto& d : detections) {
        nlohmann::ordered_json j;
        j["image"] = image_id;
        j["cx"] = d.center.x;
        j["cy"] = d.center.y;
        j["beta_px"] = d.beta_px;
        j["score"] = d.score;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<Detection> parse_detections_jsonl(const std::string& text, const std::string& source,
                                              std::vector<std::string>* image_ids) {
    std::vector<Detection> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, std::string("invalid JSON: ") + e.what(), "line");
        }
        Detection d;
        try {
            d.center = {j.at("cx").get<double>(), j.at("cy").get<double>()};
            d.beta_px = j.at("beta_px").get<double>();
            d.score = j.at("score").get<double>();
            if (image_ids) image_ids->push_back(j.value("image", std::string{}));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, std::string("missing or mistyped field: ") + e.what(), "line");
        }
        if (!(d.beta_px > 0.0)) throw ParseError(source, lineno, "beta_px must be positive", "line");
        out.push_back(d);
    }
    return out;
}

dataio::ImageGray heatmap_image(const ScaleGrid& grid) {
    dataio::ImageGray img(grid.cols, grid.rows);
    if (grid.values.empty()) return img;
    const auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < grid.values.size(); ++i)
        img.pixels[i] = span > 0.0 ? (grid.values[i] - *lo) / span : 0.0;
    return img;
}

void write_heatmaps(const std::string& dir, const DensityField& field) {
    std::string index = "file size stride origin_x origin_y cols rows min max\n";
    char name[64];
    char row[256];
    for (const auto& g : field.scales) {
        std::snprintf(name, sizeof name, "heatmap_s%04d.pgm", g.size);
        dataio::save_pgm((std::filesystem::path(dir) / name).string(), heatmap_image(g));
        double lo = 0.0, hi = 0.0;
        if (!g.values.empty()) {
            lo = *std::min_element(g.values.begin(), g.values.end());
            hi = *std::max_element(g.values.begin(), g.values.end());
        }
        std::snprintf(row, sizeof row, "%s %d %d %.9g %.9g %d %d %.17g %.17g\n", name, g.size, g.stride, g.origin.x,
                      g.origin.y, g.cols, g.rows, lo, hi);
        index += row;
    }
    std::ofstream out((std::filesystem::path(dir) / "heatmaps.txt").string(), std::ios::binary);
    if (!out) throw IoError("cannot write heatmaps.txt in " + dir);
    out << index;
}

}  // namespace densityscan::detect
