#include "gradmorph/checkpoint.hpp"

#include <bit>
#include <cstdint>

#include <json.hpp>

#include "gradmorph/errors.hpp"
#include "gradmorph/io.hpp"

namespace gradmorph {

namespace {

using nlohmann::json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class CkptReader {
public:
    CkptReader(const std::vector<std::uint8_t>& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data()) + pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void fail(const std::string& msg) const { throw ParseError(name_ + ": " + msg, pos_); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw ParseError(name_ + ": truncated checkpoint", pos_);
    }
    const std::vector<std::uint8_t>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

void save_checkpoint(const std::filesystem::path& path, const json& config, const ParamSet& params) {
    const std::string cfg = config.dump();
    std::vector<std::uint8_t> out;
    out.push_back('G');
    out.push_back('M');
    out.push_back('C');
    out.push_back('K');
    put_u32(out, 1);  // version
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    put_u32(out, static_cast<std::uint32_t>(params.count()));
    for (std::size_t i = 0; i < params.count(); ++i) {
        const std::string& name = params.names[i];
        const Tensor& t = params.tensors[i];
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape) put_u64(out, static_cast<std::uint64_t>(d));
        for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    write_file_bytes(path, out);
}

std::pair<json, ParamSet> load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError&) {
        throw IoError("checkpoint not found: " + path.string());
    }
    CkptReader r(bytes, path.string());
    if (r.remaining() < 4 || r.str(4) != "GMCK") throw ParseError(path.string() + ": bad checkpoint magic", 0);
    const std::uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t cfg_len = r.u32();
    json config;
    try {
        config = json::parse(r.str(cfg_len));
    } catch (const json::exception& e) {
        r.fail(std::string("bad config block: ") + e.what());
    }
    if (config.value("kind", "") != expected_kind)
        throw IoError(path.string() + ": checkpoint kind '" + config.value("kind", "") + "', expected '" +
                      expected_kind + "'");

    ParamSet params;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 4096) r.fail("parameter name too long");
        const std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        if (rank > 8) r.fail("parameter rank out of range");
        std::vector<int> shape;
        std::int64_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64();
            if (dim == 0 || dim > (1u << 24)) r.fail("parameter dimension out of range");
            shape.push_back(static_cast<int>(dim));
            total *= static_cast<std::int64_t>(dim);
        }
        std::vector<double> data(static_cast<std::size_t>(total));
        for (std::int64_t j = 0; j < total; ++j) data[static_cast<std::size_t>(j)] = r.f64();
        params.add(name, Tensor(std::move(shape), std::move(data)));
    }
    if (r.remaining() != 0) r.fail("trailing bytes after checkpoint payload");
    return {config, std::move(params)};
}

}  // namespace

void save_segnet(const std::filesystem::path& path, const SegModel& model) {
    json cfg = {
        {"kind", "segnet"},
        {"depth", model.config.depth},
        {"base_channels", model.config.base_channels},
        {"num_classes", model.config.num_classes},
        {"input_channels", model.config.input_channels},
    };
    save_checkpoint(path, cfg, model.params);
}

SegModel load_segnet(const std::filesystem::path& path) {
    auto [cfg, params] = load_checkpoint(path, "segnet");
    SegModel m;
    m.config.depth = cfg.at("depth").get<int>();
    m.config.base_channels = cfg.at("base_channels").get<int>();
    m.config.num_classes = cfg.at("num_classes").get<int>();
    m.config.input_channels = cfg.at("input_channels").get<int>();
    m.config.validate();
    m.params = std::move(params);
    return m;
}

void save_translator(const std::filesystem::path& path, const TranslatorModel& model) {
    json cfg = {
        {"kind", "translator"},
        {"blocks", model.config.blocks},
        {"growth_channels", model.config.growth_channels},
        {"layers_per_block", model.config.layers_per_block},
        {"input_channels", model.config.input_channels},
    };
    save_checkpoint(path, cfg, model.params);
}

TranslatorModel load_translator(const std::filesystem::path& path) {
    auto [cfg, params] = load_checkpoint(path, "translator");
    TranslatorModel m;
    m.config.blocks = cfg.at("blocks").get<int>();
    m.config.growth_channels = cfg.at("growth_channels").get<int>();
    m.config.layers_per_block = cfg.at("layers_per_block").get<int>();
    m.config.input_channels = cfg.at("input_channels").get<int>();
    m.config.validate();
    m.params = std::move(params);
    return m;
}

}  // namespace gradmorph
