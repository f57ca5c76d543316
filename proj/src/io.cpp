#include "gradmorph/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gradmorph/errors.hpp"

namespace gradmorph {

// ---------------------------------------------------------------------------
// file helpers
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    static const char* hexd = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hexd[h & 0xF];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

std::string file_hash_hex(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return fnv1a64_hex(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// little-endian primitives
// ---------------------------------------------------------------------------

namespace {

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::string name)
        : bytes_(bytes), name_(std::move(name)) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint8_t u8() {
        need(1, "byte");
        return bytes_[pos_++];
    }
    std::uint8_t peek() const {
        need(1, "byte");
        return bytes_[pos_];
    }
    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8, "u64");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n, "string");
        std::string s(reinterpret_cast<const char*>(bytes_.data()) + pos_, n);
        pos_ += n;
        return s;
    }
    void fail(const std::string& msg) const { throw ParseError(name_ + ": " + msg, pos_); }

private:
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size())
            throw ParseError(name_ + ": truncated payload, expected " + what, pos_);
    }

    const std::vector<std::uint8_t>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

}  // namespace

// ---------------------------------------------------------------------------
// NetPBM
// ---------------------------------------------------------------------------

namespace {

// Skips whitespace and '#' comments between header tokens.
void skip_pbm_space(ByteReader& r) {
    for (;;) {
        if (r.remaining() == 0) r.fail("unexpected end of header");
        const std::uint8_t c = r.peek();
        if (c == '#') {
            while (r.remaining() > 0 && r.u8() != '\n') {
            }
        } else if (std::isspace(c)) {
            r.u8();
        } else {
            return;
        }
    }
}

int read_pbm_int(ByteReader& r) {
    skip_pbm_space(r);
    if (r.peek() < '0' || r.peek() > '9') r.fail("expected decimal integer in header");
    long v = 0;
    while (r.remaining() > 0) {
        const std::uint8_t c = r.u8();
        if (c >= '0' && c <= '9') {
            v = v * 10 + (c - '0');
            if (v > 1 << 20) r.fail("header value out of range");
        } else {
            if (!std::isspace(c)) r.fail("malformed header integer");
            return static_cast<int>(v);
        }
    }
    r.fail("unexpected end of header");
    return 0;
}

Tensor read_netpbm(const fs::path& path, int expected_channels) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    if (r.remaining() < 2) r.fail("missing magic");
    const char m0 = static_cast<char>(r.u8());
    const char m1 = static_cast<char>(r.u8());
    int channels;
    if (m0 == 'P' && m1 == '5')
        channels = 1;
    else if (m0 == 'P' && m1 == '6')
        channels = 3;
    else
        throw ParseError(path.string() + ": bad NetPBM magic", 0);
    if (expected_channels != 0 && channels != expected_channels)
        throw ParseError(path.string() + ": wrong NetPBM variant", 0);

    const int width = read_pbm_int(r);
    const int height = read_pbm_int(r);
    const int maxval = read_pbm_int(r);
    if (width <= 0 || height <= 0) r.fail("non-positive image dimensions");
    if (maxval != 255) r.fail("maxval must be 255, got " + std::to_string(maxval));
    // read_pbm_int consumed the single whitespace byte after maxval

    const std::size_t n = static_cast<std::size_t>(width) * height * static_cast<std::size_t>(channels);
    if (r.remaining() < n) r.fail("truncated pixel payload");

    Tensor out({channels, height, width});
    // planar layout from interleaved bytes
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                out.at(c, y, x) = static_cast<double>(r.u8()) / 255.0;
    return out;
}

std::vector<std::uint8_t> encode_netpbm(const Tensor& image, const char* magic, int channels,
                                        const char* what) {
    if (image.rank() != 3 || image.dim(0) != channels)
        throw ContractViolation(std::string(what) + ": expected [" + std::to_string(channels) + ",H,W], got " +
                                image.shape_str());
    const int h = image.dim(1), w = image.dim(2);
    std::vector<std::uint8_t> out;
    const std::string header = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    out.reserve(out.size() + static_cast<std::size_t>(h) * w * static_cast<std::size_t>(channels));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const double v = image.at(c, y, x);
                if (v < -1e-9 || v > 1.0 + 1e-9)
                    throw ContractViolation(std::string(what) + ": pixel value " + std::to_string(v) +
                                            " outside [0,1]; use the raw tensor format for unbounded data");
                const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
            }
    return out;
}

}  // namespace

Tensor read_pgm(const fs::path& path) { return read_netpbm(path, 1); }
Tensor read_ppm(const fs::path& path) { return read_netpbm(path, 3); }
Tensor read_image_any(const fs::path& path) { return read_netpbm(path, 0); }

void write_pgm(const fs::path& path, const Tensor& image) {
    write_file_bytes(path, encode_netpbm(image, "P5", 1, "write_pgm"));
}

void write_ppm(const fs::path& path, const Tensor& image) {
    write_file_bytes(path, encode_netpbm(image, "P6", 3, "write_ppm"));
}

void write_labelmap_pgm(const fs::path& path, const LabelMap& map, int num_classes) {
    if (num_classes < 2 || num_classes > 256)
        throw ContractViolation("write_labelmap_pgm: num_classes must be in [2,256]");
    Tensor img({1, map.height, map.width});
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        const int l = map.labels[i];
        if (l < 0 || l >= num_classes)
            throw ContractViolation("write_labelmap_pgm: label " + std::to_string(l) + " out of range");
        img.data[i] = static_cast<double>(l) / static_cast<double>(num_classes - 1);
    }
    write_pgm(path, img);
}

LabelMap read_labelmap_pgm(const fs::path& path, int num_classes) {
    if (num_classes < 2 || num_classes > 256)
        throw ContractViolation("read_labelmap_pgm: num_classes must be in [2,256]");
    const Tensor img = read_pgm(path);
    LabelMap map(img.dim(1), img.dim(2));
    for (std::size_t i = 0; i < map.labels.size(); ++i)
        map.labels[i] = static_cast<int>(std::lround(img.data[i] * static_cast<double>(num_classes - 1)));
    return map;
}

// ---------------------------------------------------------------------------
// raw tensor format
// ---------------------------------------------------------------------------

void write_tensor(const fs::path& path, const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + static_cast<std::size_t>(t.size()) * 8);
    out.push_back('G');
    out.push_back('M');
    out.push_back('T');
    out.push_back('R');
    put_u32(out, 1);  // version
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) put_f64(out, v);
    write_file_bytes(path, out);
}

Tensor read_tensor(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    if (r.remaining() < 4 || r.str(4) != "GMTR") throw ParseError(path.string() + ": bad tensor magic", 0);
    const std::uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported tensor format version " + std::to_string(version));
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail("tensor rank " + std::to_string(rank) + " out of range");
    std::vector<int> shape;
    std::int64_t total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint64_t d = r.u64();
        if (d == 0 || d > (1u << 24)) r.fail("tensor dimension out of range");
        shape.push_back(static_cast<int>(d));
        total *= static_cast<std::int64_t>(d);
    }
    std::vector<double> data(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) data[static_cast<std::size_t>(i)] = r.f64();
    if (r.remaining() != 0) r.fail("trailing bytes after tensor payload");
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace gradmorph
