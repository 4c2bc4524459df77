#include "binary_io.hpp"
#include "densityscan/model.hpp"

namespace densityscan::model {

namespace {
constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
}

// Layout (little-endian): "DSCK", u32 version, u8 variant, u32 layer count,
// per layer {u8 kind, u32 filters, u32 kernel}, f64 target_scale, f64 t_pos, f64 t_neg,
// u32 tensor count, per tensor {u32 rank, u32 dims..., f64 data...}.
std::string encode_checkpoint(const CnnModel& model) {
    std::string buf(kMagic, 4);
    detail::put<std::uint32_t>(buf, kCheckpointVersion);
    detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(model.arch.variant));
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(model.arch.layers.size()));
    for (const auto& l : model.arch.layers) {
        detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(l.kind));
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(l.filters));
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(l.kernel));
    }
    detail::put<double>(buf, model.target_scale);
    detail::put<double>(buf, model.thresholds.t_pos);
    detail::put<double>(buf, model.thresholds.t_neg);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(model.params.size()));
    for (const auto& t : model.params) {
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.dims()) detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
        for (double v : t.data()) detail::put<double>(buf, v);
    }
    return buf;
}

CnnModel decode_checkpoint(const std::string& bytes, const std::string& source) {
    detail::Reader r(bytes, source);
    if (r.get_bytes(4) != std::string(kMagic, 4)) r.fail("bad magic (expected DSCK)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

    CnnModel m;
    const auto variant = r.get<std::uint8_t>();
    if (variant < 1 || variant > 3) r.fail("unknown architecture variant " + std::to_string(variant));
    m.arch.variant = static_cast<Variant>(variant);
    const auto layers = r.get<std::uint32_t>();
    if (layers > 64) r.fail("implausible layer count");
    for (std::uint32_t i = 0; i < layers; ++i) {
        LayerSpec l;
        const auto kind = r.get<std::uint8_t>();
        if (kind > 1) r.fail("unknown layer kind");
        l.kind = static_cast<LayerSpec::Kind>(kind);
        l.filters = r.get<std::uint32_t>();
        l.kernel = r.get<std::uint32_t>();
        m.arch.layers.push_back(l);
    }
    m.target_scale = r.get<double>();
    m.thresholds.t_pos = r.get<double>();
    m.thresholds.t_neg = r.get<double>();

    const CnnModel expected = zero_model(m.arch);
    const auto count = r.get<std::uint32_t>();
    if (count != expected.params.size()) r.fail("tensor count does not match architecture");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) r.fail("implausible tensor rank");
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = r.get<std::uint32_t>();
        if (dims != expected.params[i].dims()) r.fail("tensor " + std::to_string(i) + " shape does not match architecture");
        std::vector<double> data(numerics::element_count(dims));
        r.need(data.size() * 8);
        for (double& v : data) v = r.get<double>();
        m.params.emplace_back(std::move(dims), std::move(data));
    }
    if (!r.at_end()) r.fail("trailing bytes after weights");
    return m;
}

void save_checkpoint(const std::string& path, const CnnModel& model) {
    detail::write_file(path, encode_checkpoint(model));
}

CnnModel load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path), path); }

}  // namespace densityscan::model
