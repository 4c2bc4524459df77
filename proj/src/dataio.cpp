#include "densityscan/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <random>
#include <sstream>

#include "densityscan/errors.hpp"

namespace densityscan::dataio {

ImageGray::ImageGray(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

// ---------------------------------------------------------------------------
// PGM

namespace {

class PgmReader {
public:
    PgmReader(std::span<const std::uint8_t> bytes, const std::string& source)
        : bytes_(bytes), source_(source) {}

    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ >= bytes_.size(); }
    std::uint8_t byte() { return bytes_[pos_++]; }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, pos_, what); }

    void skip_space_and_comments() {
        while (!at_end()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (!at_end() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* what) {
        skip_space_and_comments();
        if (at_end()) fail(std::string("truncated file: expected ") + what);
        if (!std::isdigit(bytes_[pos_])) fail(std::string("expected ") + what);
        long v = 0;
        while (!at_end() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > 1'000'000'000) fail(std::string(what) + " out of range");
        }
        return v;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

ImageGray decode_pgm(std::span<const std::uint8_t> bytes, const std::string& source) {
    PgmReader r(bytes, source);
    if (bytes.size() < 2) r.fail("truncated file: missing magic");
    if (bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) r.fail("bad magic (expected P2 or P5)");
    const bool binary = bytes[1] == '5';
    r.byte();
    r.byte();

    const long width = r.read_uint("width");
    const long height = r.read_uint("height");
    r.skip_space_and_comments();
    const std::size_t maxval_pos = r.pos();
    const long maxval = r.read_uint("maxval");
    if (width <= 0 || height <= 0) r.fail("image dimensions must be positive");
    if (maxval <= 0 || maxval > 255)
        throw ParseError(source, maxval_pos, "unsupported maxval " + std::to_string(maxval));

    ImageGray img(static_cast<int>(width), static_cast<int>(height));
    const std::size_t n = img.pixels.size();
    const double scale = 1.0 / 255.0;
    if (binary) {
        if (r.at_end() || !std::isspace(r.byte())) r.fail("expected single whitespace after maxval");
        if (bytes.size() - r.pos() < n) r.fail("truncated pixel data");
        for (std::size_t i = 0; i < n; ++i) {
            const long v = r.byte();
            if (v > maxval) r.fail("sample exceeds maxval");
            img.pixels[i] = static_cast<double>(v) * scale;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const long v = r.read_uint("pixel value");
            if (v > maxval) r.fail("sample exceeds maxval");
            img.pixels[i] = static_cast<double>(v) * scale;
        }
    }
    return img;
}

ImageGray load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes, path);
}

std::vector<std::uint8_t> encode_pgm(const ImageGray& image) {
    const std::string header = "P5\n" + std::to_string(image.width) + " " +
                               std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + image.pixels.size());
    for (double v : image.pixels)
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return out;
}

void save_pgm(const std::string& path, const ImageGray& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const auto bytes = encode_pgm(image);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Resampling

double sample_bilinear(std::span<const double> grid, int width, int height, double x, double y) {
    const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(width - 1));
    const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double ax = fx - x0;
    const double ay = fy - y0;
    const auto px = [&](int xx, int yy) { return grid[static_cast<std::size_t>(yy) * width + xx]; };
    const double top = px(x0, y0) + ax * (px(x1, y0) - px(x0, y0));
    const double bottom = px(x0, y1) + ax * (px(x1, y1) - px(x0, y1));
    return top + ay * (bottom - top);
}

numerics::Tensor crop_resize(const ImageGray& image, const Window& window, int out_size) {
    if (!window.inside(image.width, image.height))
        throw InvalidArgument("window (" + std::to_string(window.x) + "," + std::to_string(window.y) +
                              ", size " + std::to_string(window.size) + ") lies outside the " +
                              std::to_string(image.width) + "x" + std::to_string(image.height) + " image");
    const auto n = static_cast<std::size_t>(out_size);
    numerics::Tensor out({1, n, n});
    const double step = static_cast<double>(window.size) / out_size;
    for (int v = 0; v < out_size; ++v) {
        const double y = window.y + (v + 0.5) * step;
        for (int u = 0; u < out_size; ++u) {
            const double x = window.x + (u + 0.5) * step;
            out.at(0, v, u) = sample_bilinear(image.pixels, image.width, image.height, x, y);
        }
    }
    return out;
}

numerics::Tensor to_tensor(const ImageGray& image) {
    return numerics::Tensor({1, static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)},
                            image.pixels);
}

// ---------------------------------------------------------------------------
// FDDB

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<FddbAnnotation> parse_fddb(const std::string& fold_text, const std::string& source) {
    std::vector<std::string> lines;
    {
        std::istringstream in(fold_text);
        std::string line;
        while (std::getline(in, line)) lines.push_back(trim(line));
    }

    std::vector<FddbAnnotation> out;
    std::size_t i = 0;
    const auto skip_blank = [&] {
        while (i < lines.size() && lines[i].empty()) ++i;
    };
    skip_blank();
    while (i < lines.size()) {
        FddbAnnotation ann;
        ann.image_id = lines[i++];
        const std::string block = "image block '" + ann.image_id + "'";
        if (i >= lines.size()) throw ParseError(source, i + 1, block + ": missing face count", "line");

        long long count = -1;
        {
            std::istringstream cs(lines[i]);
            std::string rest;
            if (!(cs >> count) || (cs >> rest) || count < 0)
                throw ParseError(source, i + 1, block + ": bad face count \"" + lines[i] + "\"", "line");
            ++i;
        }
        for (long long k = 0; k < count; ++k) {
            if (i >= lines.size())
                throw ParseError(source, i + 1,
                                 block + ": declares " + std::to_string(count) + " faces, found " +
                                     std::to_string(k),
                                 "line");
            std::istringstream es(lines[i]);
            Ellipse e;
            double score = 0.0;
            std::string extra;
            if (!(es >> e.major_r >> e.minor_r >> e.angle_rad >> e.cx >> e.cy) || (es >> score && es >> extra))
                throw ParseError(source, i + 1,
                                 block + ": declares " + std::to_string(count) + " faces, found " +
                                     std::to_string(k) + " before \"" + lines[i] + "\"",
                                 "line");
            if (!(e.minor_r > 0.0) || e.major_r < e.minor_r)
                throw ParseError(source, i + 1, block + ": ellipse needs major_r >= minor_r > 0", "line");
            ann.ellipses.push_back(e);
            ++i;
        }
        out.push_back(std::move(ann));
        skip_blank();
    }
    return out;
}

std::string serialize_fddb(const std::vector<FddbAnnotation>& annotations) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const auto& a : annotations) {
        os << a.image_id << '\n' << a.ellipses.size() << '\n';
        for (const auto& e : a.ellipses)
            os << e.major_r << ' ' << e.minor_r << ' ' << e.angle_rad << ' ' << e.cx << ' ' << e.cy << " 1\n";
    }
    return os.str();
}

density::GaussianComponent ellipse_to_gaussian(const Ellipse& e) {
    return {{e.cx, e.cy}, 4.0 / (e.major_r * e.minor_r)};
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void render_blob(ImageGray& image, const density::GaussianComponent& c, const BlobStyle& style) {
    const double sigma = c.sigma();
    const double r_disc = 2.0 * sigma;
    const double r_ring = 3.0 * sigma;
    const int x0 = std::max(0, static_cast<int>(std::floor(c.mu.x - r_ring)));
    const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(c.mu.x + r_ring)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.mu.y - r_ring)));
    const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(c.mu.y + r_ring)));
    constexpr int kSub = 4;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            int in_disc = 0, in_ring = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    const Vec2 p{x + (sx + 0.5) / kSub, y + (sy + 0.5) / kSub};
                    const double d = distance(p, c.mu);
                    if (d <= r_disc) ++in_disc;
                    else if (d <= r_ring) ++in_ring;
                }
            }
            if (in_disc + in_ring == 0) continue;
            const double wd = static_cast<double>(in_disc) / (kSub * kSub);
            const double wr = static_cast<double>(in_ring) / (kSub * kSub);
            double& px = image.at(x, y);
            px = px * (1.0 - wd - wr) + style.disc * wd + style.ring * wr;
        }
    }
}

double matched_half_window(double beta_px) {
    return 0.5 * density::kCanonicalSize * std::sqrt(density::kCanonicalBeta / beta_px);
}

std::pair<ImageGray, density::ObjectDistribution> synth_scene(const SceneSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0) throw InvalidArgument("scene size must be positive");
    if (!(spec.beta_min > 0.0) || spec.beta_max < spec.beta_min)
        throw InvalidArgument("scene beta range must satisfy 0 < beta_min <= beta_max");
    if (spec.min_objects < 0 || spec.max_objects < spec.min_objects)
        throw InvalidArgument("scene object count range is invalid");

    std::mt19937_64 rng(spec.rng_seed);
    std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int count = count_dist(rng);
    const double min_sep = 4.0 / std::sqrt(spec.beta_min);

    density::ObjectDistribution dist;
    constexpr int kMaxAttempts = 2000;
    for (int n = 0; n < count; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            const double beta = spec.beta_min + (spec.beta_max - spec.beta_min) * unit(rng);
            const double margin = matched_half_window(beta);
            if (2.0 * margin > spec.width || 2.0 * margin > spec.height) continue;
            const Vec2 mu{margin + (spec.width - 2.0 * margin) * unit(rng),
                          margin + (spec.height - 2.0 * margin) * unit(rng)};
            const bool clear = std::ranges::all_of(dist.components, [&](const auto& other) {
                return distance(other.mu, mu) >= min_sep;
            });
            if (clear) {
                dist.components.push_back({mu, beta});
                placed = true;
            }
        }
        if (!placed)
            throw Error("synth_scene: could not place object " + std::to_string(n + 1) + " of " +
                        std::to_string(count) + " with separation " + std::to_string(min_sep) + " px");
    }

    const double background = 0.3 + 0.15 * unit(rng);
    const double gx = 0.1 * (unit(rng) - 0.5) / spec.width;
    const double gy = 0.1 * (unit(rng) - 0.5) / spec.height;
    ImageGray image(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) image.at(x, y) = background + gx * x + gy * y;

    for (const auto& c : dist.components) {
        BlobStyle style{0.75 + 0.2 * unit(rng), 0.05 + 0.1 * unit(rng)};
        render_blob(image, c, style);
    }

    if (spec.noise > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise);
        for (double& v : image.pixels) v += noise(rng);
    }
    for (double& v : image.pixels) v = std::clamp(v, 0.0, 1.0);
    return {std::move(image), std::move(dist)};
}

}  // namespace densityscan::dataio
