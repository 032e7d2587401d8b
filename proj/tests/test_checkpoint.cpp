#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace pmmkit;
using testing::error_category;

namespace {

Checkpoint sample_checkpoint() {
    ExperimentConfig cfg;
    cfg.train = preset_pmm(40);
    cfg.train.model.hidden = {5, 3};
    cfg.train.model.activation = Activation::tanh;
    auto [train, val] = testing::small_blobs(4, 10);
    TrainResult r = train_run(cfg.train, train, val, RunOptions{17, {}});
    return Checkpoint{kCheckpointVersion, to_ini(cfg), r.state};
}

std::optional<ErrorCategory> decode_error(const std::vector<unsigned char>& bytes) {
    return error_category([&] { decode_checkpoint(bytes); });
}

std::uint32_t le32_at(const std::vector<unsigned char>& b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[off + i]} << (8 * i);
    return v;
}

}  // namespace

TEST_CASE("checkpoint round-trips exactly") {
    const Checkpoint ck = sample_checkpoint();
    CHECK(ck.state.step == 17);
    const auto bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back == ck);
    CHECK(encode_checkpoint(back) == bytes);

    const auto dir = testing::scratch_dir("checkpoint");
    save_checkpoint(ck, (dir / "a.ckpt").string());
    CHECK(testing::file_bytes(dir / "a.ckpt") == bytes);
    CHECK(load_checkpoint((dir / "a.ckpt").string()) == ck);
    CHECK(error_category([&] { load_checkpoint((dir / "none.ckpt").string()); }) == ErrorCategory::io);
}

TEST_CASE("checkpoint header layout") {
    const auto bytes = encode_checkpoint(sample_checkpoint());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PMMK");
    CHECK(le32_at(bytes, 4) == kCheckpointVersion);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t{bytes[8 + i]} << (8 * i);
    CHECK(len == bytes.size() - 20);
    // Independent bitwise CRC-32 (reflected, polynomial 0xEDB88320).
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 16; i < 16 + len; ++i) {
        crc ^= bytes[i];
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    CHECK(le32_at(bytes, bytes.size() - 4) == (crc ^ 0xFFFFFFFFu));
}

TEST_CASE("checkpoint version mismatch is reported as such") {
    Checkpoint ck = sample_checkpoint();
    ck.format_version = kCheckpointVersion + 1;
    CHECK(decode_error(encode_checkpoint(ck)) == ErrorCategory::version);
}

TEST_CASE("damaged checkpoints are rejected") {
    const auto good = encode_checkpoint(sample_checkpoint());
    CHECK_FALSE(decode_error(good));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(decode_error(bad_magic) == ErrorCategory::corrupt);

    for (std::size_t pos : {std::size_t{20}, good.size() / 2, good.size() - 5, good.size() - 1}) {
        auto flipped = good;
        flipped[pos] ^= 0x10;
        CHECK(decode_error(flipped) == ErrorCategory::corrupt);
    }

    auto truncated = good;
    truncated.resize(good.size() - 3);
    CHECK(decode_error(truncated) == ErrorCategory::corrupt);
    auto trailing = good;
    trailing.push_back(0);
    CHECK(decode_error(trailing) == ErrorCategory::corrupt);
    CHECK(decode_error({}) == ErrorCategory::corrupt);
    CHECK(decode_error({'P', 'M', 'M', 'K'}) == ErrorCategory::corrupt);
}

TEST_CASE("structurally invalid payload with a valid checksum is corrupt") {
    // Hand-built payload whose head has 2 rows but only 1 bias value.
    auto le = [](std::vector<unsigned char>& out, std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    };
    std::vector<unsigned char> payload;
    for (int i = 0; i < 4; ++i) le(payload, 0, 8);  // step, epoch, batch, rng
    le(payload, 0, 8);                              // empty config text
    le(payload, 0, 8);                              // no body layers
    le(payload, 2, 8);
    le(payload, 1, 8);
    le(payload, std::bit_cast<std::uint64_t>(1.0), 8);
    le(payload, std::bit_cast<std::uint64_t>(2.0), 8);
    le(payload, std::bit_cast<std::uint64_t>(0.0), 8);

    std::uint32_t crc = 0xFFFFFFFFu;
    for (unsigned char c : payload) {
        crc ^= c;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    std::vector<unsigned char> file{'P', 'M', 'M', 'K'};
    le(file, kCheckpointVersion, 4);
    le(file, payload.size(), 8);
    file.insert(file.end(), payload.begin(), payload.end());
    le(file, crc ^ 0xFFFFFFFFu, 4);
    CHECK(decode_error(file) == ErrorCategory::corrupt);
}
