#include "densityscan/density.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "densityscan/errors.hpp"

namespace densityscan::density {

namespace {
constexpr double kInvTwoPi = 0.5 / std::numbers::pi;
}

double GaussianComponent::sigma() const { return 1.0 / std::sqrt(beta); }

double density_at(const ObjectDistribution& dist, Vec2 x) {
    double sum = 0.0;
    for (const auto& c : dist.components)
        sum += kInvTwoPi * c.beta * std::exp(-0.5 * c.beta * squared_norm(x - c.mu));
    return sum;
}

double canonical_beta(double beta_px, double window_size, double canonical_size) {
    const double r = window_size / canonical_size;
    return beta_px * r * r;
}

double target_value(const ObjectDistribution& dist, const Window& window) {
    const Vec2 center = window.center();
    double sum = 0.0;
    for (const auto& c : dist.components) {
        const double peak = kInvTwoPi * canonical_beta(c.beta, window.size);
        sum += peak * std::exp(-0.5 * c.beta * squared_norm(center - c.mu));
    }
    return sum;
}

double normalized_target(const ObjectDistribution& dist, const Window& window) {
    return kTargetScale * target_value(dist, window);
}

std::vector<double> rasterize(const ObjectDistribution& dist, int width, int height) {
    std::vector<double> field(static_cast<std::size_t>(width) * height, 0.0);
    for (const auto& c : dist.components) {
        const double reach = 5.0 * c.sigma();
        const int x0 = std::max(0, static_cast<int>(std::floor(c.mu.x - reach)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.mu.x + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(c.mu.y - reach)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.mu.y + reach)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d2 = squared_norm(Vec2{x + 0.5, y + 0.5} - c.mu);
                if (d2 > reach * reach) continue;
                field[static_cast<std::size_t>(y) * width + x] +=
                    kInvTwoPi * c.beta * std::exp(-0.5 * c.beta * d2);
            }
        }
    }
    return field;
}

void write_objdist(std::ostream& out, const ObjectDistribution& dist) {
    out << "#objdist v1 " << dist.components.size() << '\n';
    out << std::setprecision(17);
    for (const auto& c : dist.components) out << c.mu.x << ' ' << c.mu.y << ' ' << c.beta << '\n';
}

std::string to_objdist_text(const ObjectDistribution& dist) {
    std::ostringstream os;
    write_objdist(os, dist);
    return os.str();
}

ObjectDistribution parse_objdist(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError(source, 1, "missing #objdist header", "line");
    ++line_no;
    std::istringstream header(line);
    std::string magic, version;
    long long count = -1;
    if (!(header >> magic >> version >> count) || magic != "#objdist" || version != "v1" || count < 0)
        throw ParseError(source, line_no, "bad header \"" + line + "\"", "line");

    ObjectDistribution dist;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        GaussianComponent c;
        if (!(fields >> c.mu.x >> c.mu.y >> c.beta))
            throw ParseError(source, line_no, "expected \"mu_x mu_y beta\"", "line");
        if (!(c.beta > 0.0) || !std::isfinite(c.beta) || !std::isfinite(c.mu.x) || !std::isfinite(c.mu.y))
            throw ParseError(source, line_no, "component needs finite mu and beta > 0", "line");
        dist.components.push_back(c);
    }
    if (static_cast<long long>(dist.components.size()) != count)
        throw ParseError(source, line_no,
                         "header declares " + std::to_string(count) + " components, found " +
                             std::to_string(dist.components.size()),
                         "line");
    return dist;
}

ObjectDistribution load_objdist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_objdist(buf.str(), path);
}

void save_objdist(const std::string& path, const ObjectDistribution& dist) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_objdist(out, dist);
}

}  // namespace densityscan::density
