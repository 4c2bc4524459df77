#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "densityscan/deform.hpp"

namespace densityscan {

namespace detail {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace detail

namespace deform {

namespace {

constexpr char kSamplesMagic[4] = {'D', 'S', 'D', 'S'};
constexpr std::uint8_t kHasTangentScale = 1;
constexpr std::uint8_t kHasTangentShift2 = 2;

}  // namespace

// Record layout (little-endian), preceded by its u32 byte length:
//   u32 side, side*side f32 pixels, f64 target, f64 tangent_scale, f64 tangent_shift2, f64 beta,
//   f64 base_target, f64 eps1, f64 shift_x, f64 shift_y, u32 seed_index, u8 kind, u8 flags
void write_samples(const std::string& path, const std::vector<TrainingSample>& samples) {
    std::string buf(kSamplesMagic, 4);
    detail::put<std::uint32_t>(buf, kDatasetFormatVersion);
    detail::put<std::uint64_t>(buf, samples.size());
    std::string rec;
    for (const auto& s : samples) {
        if (s.patch.dims() != std::vector<std::size_t>{1, kPatchSize, kPatchSize})
            throw ShapeError("patch", "dataset samples must be [1,32,32]");
        rec.clear();
        detail::put<std::uint32_t>(rec, static_cast<std::uint32_t>(kPatchSize));
        for (double v : s.patch.data()) detail::put<float>(rec, static_cast<float>(v));
        detail::put<double>(rec, s.target);
        detail::put<double>(rec, s.tangent_scale.value_or(0.0));
        detail::put<double>(rec, s.tangent_shift2.value_or(0.0));
        detail::put<double>(rec, s.beta);
        detail::put<double>(rec, s.base_target);
        detail::put<double>(rec, s.eps1);
        detail::put<double>(rec, s.shift_x);
        detail::put<double>(rec, s.shift_y);
        detail::put<std::uint32_t>(rec, s.seed_index);
        detail::put<std::uint8_t>(rec, static_cast<std::uint8_t>(s.kind));
        const std::uint8_t flags = (s.tangent_scale ? kHasTangentScale : 0) |
                                   (s.tangent_shift2 ? kHasTangentShift2 : 0);
        detail::put<std::uint8_t>(rec, flags);
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(rec.size()));
        buf += rec;
    }
    detail::write_file(path, buf);
}

std::vector<TrainingSample> read_samples(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    detail::Reader r(bytes, path);
    if (r.get_bytes(4) != std::string(kSamplesMagic, 4)) r.fail("bad magic (expected DSDS)");
    const auto version = r.get<std::uint32_t>();
    if (version != kDatasetFormatVersion) r.fail("unsupported dataset format version " + std::to_string(version));
    const auto count = r.get<std::uint64_t>();

    std::vector<TrainingSample> out;
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint32_t>();
        const std::size_t start = r.pos();
        r.need(len);
        const auto side = r.get<std::uint32_t>();
        if (side != kPatchSize) r.fail("unsupported patch side " + std::to_string(side));
        TrainingSample s;
        std::vector<double> px(kPatchSize * kPatchSize);
        for (double& v : px) v = r.get<float>();
        s.patch = numerics::Tensor({1, kPatchSize, kPatchSize}, std::move(px));
        s.target = r.get<double>();
        const double ts = r.get<double>();
        const double tq = r.get<double>();
        s.beta = r.get<double>();
        s.base_target = r.get<double>();
        s.eps1 = r.get<double>();
        s.shift_x = r.get<double>();
        s.shift_y = r.get<double>();
        s.seed_index = r.get<std::uint32_t>();
        const auto kind = r.get<std::uint8_t>();
        if (kind > static_cast<std::uint8_t>(SampleKind::CornerShift)) r.fail("unknown sample kind");
        s.kind = static_cast<SampleKind>(kind);
        const auto flags = r.get<std::uint8_t>();
        if (flags & kHasTangentScale) s.tangent_scale = ts;
        if (flags & kHasTangentShift2) s.tangent_shift2 = tq;
        // Newer writers may append fields; skip whatever this reader does not know.
        if (r.pos() - start > len) r.fail("record overruns its declared length");
        r.seek(start + len);
        out.push_back(std::move(s));
    }
    if (!r.at_end()) r.fail("trailing bytes after last record");
    return out;
}

void DatasetManifest::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries.emplace_back(key, value);
}

std::optional<std::string> DatasetManifest::get(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    return std::nullopt;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::string text;
    for (const auto& [k, v] : manifest.entries) text += k + "=" + v + "\n";
    detail::write_file(path, text);
}

DatasetManifest read_manifest(const std::string& path) {
    std::istringstream in(detail::read_file(path));
    DatasetManifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(path, line_no, "expected key=value", "line");
        m.entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return m;
}

std::vector<TrainingSample> load_dataset(const std::string& dir) { return read_samples(dir + "/samples.bin"); }

}  // namespace deform
}  // namespace densityscan
