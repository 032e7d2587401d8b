#pragma once

// Binary checkpoint, little-endian throughout:
//
//   "PMMK"            4-byte magic
//   u32 version
//   u64 payload length
//   payload
//   u32 CRC-32 of the payload
//
// Payload: u64 step, u64 epoch, u64 batch_in_epoch, u64 selection rng state,
// string config text (u64 length + bytes), u64 body layer count, then per
// layer u32 activation, u64 rows, u64 cols, W, b; then head u64 rows,
// u64 cols, W, b. Doubles are stored as their IEEE-754 bit patterns.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "pmmkit/config.hpp"
#include "pmmkit/error.hpp"
#include "pmmkit/harness.hpp"
#include "pmmkit/model.hpp"

namespace pmmkit {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'P', 'M', 'M', 'K'};

struct Checkpoint {
    std::uint32_t format_version = kCheckpointVersion;
    std::string config_text;  // to_ini() of the run's ExperimentConfig
    TrainState state;

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64s(const std::vector<double>& v) {
        for (double x : v) f64(x);
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void raw(const std::vector<unsigned char>& b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    std::vector<unsigned char>& bytes() { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<double> f64s(std::uint64_t n) {
        need(n * 8);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::uint64_t n) const {
        require(n <= size_ - pos_, ErrorCategory::corrupt, "checkpoint payload is truncated");
    }

    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32(const std::vector<unsigned char>& bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

inline Mat read_matrix(ByteReader& r) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    require(cols == 0 || rows <= r.remaining() / 8 / cols, ErrorCategory::corrupt, "checkpoint matrix too large");
    return Mat(rows, cols, r.f64s(rows * cols));
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
    detail::ByteWriter p;
    const TrainState& s = ck.state;
    p.u64(s.step);
    p.u64(s.epoch);
    p.u64(s.batch_in_epoch);
    p.u64(s.selection_rng.state());
    p.str(ck.config_text);
    p.u64(s.model.body.size());
    for (const auto& layer : s.model.body) {
        p.u32(static_cast<std::uint32_t>(layer.activation));
        p.u64(layer.W.rows());
        p.u64(layer.W.cols());
        p.f64s(layer.W.data());
        p.f64s(layer.b);
    }
    p.u64(s.model.head.W.rows());
    p.u64(s.model.head.W.cols());
    p.f64s(s.model.head.W.data());
    p.f64s(s.model.head.b);

    detail::ByteWriter out;
    out.raw({kCheckpointMagic, kCheckpointMagic + 4});
    out.u32(ck.format_version);
    out.u64(p.bytes().size());
    out.raw(p.bytes());
    out.u32(detail::crc32(p.bytes()));
    return std::move(out.bytes());
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
    require(bytes.size() >= 16 && std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin()),
            ErrorCategory::corrupt, "not a checkpoint (bad magic)");
    detail::ByteReader header(bytes.data() + 4, bytes.size() - 4);
    Checkpoint ck;
    ck.format_version = header.u32();
    require(ck.format_version == kCheckpointVersion, ErrorCategory::version,
            "checkpoint version " + std::to_string(ck.format_version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t len = header.u64();
    require(bytes.size() >= 16 && len == bytes.size() - 16 - 4, ErrorCategory::corrupt,
            "checkpoint length field does not match file size");
    const std::vector<unsigned char> payload(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    detail::ByteReader tail(bytes.data() + 16 + len, 4);
    require(tail.u32() == detail::crc32(payload), ErrorCategory::corrupt, "checkpoint checksum mismatch");

    detail::ByteReader r(payload.data(), payload.size());
    TrainState& s = ck.state;
    s.step = r.u64();
    s.epoch = r.u64();
    s.batch_in_epoch = r.u64();
    s.selection_rng.set_state(r.u64());
    ck.config_text = r.str();
    const std::uint64_t layers = r.u64();
    require(layers <= r.remaining(), ErrorCategory::corrupt, "checkpoint layer count is implausible");
    for (std::uint64_t l = 0; l < layers; ++l) {
        AffineLayer layer;
        const std::uint32_t act = r.u32();
        require(act <= static_cast<std::uint32_t>(Activation::tanh), ErrorCategory::corrupt,
                "checkpoint has unknown activation code");
        layer.activation = static_cast<Activation>(act);
        layer.W = detail::read_matrix(r);
        layer.b = r.f64s(layer.W.rows());
        s.model.body.push_back(std::move(layer));
    }
    s.model.head.W = detail::read_matrix(r);
    s.model.head.b = r.f64s(s.model.head.W.rows());
    require(r.remaining() == 0, ErrorCategory::corrupt, "trailing bytes in checkpoint payload");
    s.model.validate();
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCategory::io, "cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCategory::io, "write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(detail::read_all_bytes(path));
}

}  // namespace pmmkit
