#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "penfsi/io.hpp"
#include "test_util.hpp"

using namespace penfsi;
using namespace penfsi::test;
namespace fs = std::filesystem;

namespace {

Snapshot sample_snapshot(int dim, int cells) {
    const auto g = make_grid(dim, 0.7310585786300049, cells);
    Snapshot s;
    s.state.t = 0.1 + 0.2;  // not representable exactly in decimal
    s.state.step = 1234567;
    s.state.rho = random_field(g, 1, 0.5, 3.0);
    s.state.mu = random_field(g, 2, 1.0, 1e3);
    s.state.pressure = random_field(g, 3, -1e-300, 1e-300);
    s.state.u = random_vector(g, 4);
    s.state.u[0][0] = -0.0;
    s.state.u[0][1] = std::numeric_limits<double>::denorm_min();
    s.state.u[0][2] = std::numeric_limits<double>::max();
    BodyMarker b1{3, 2.5, random_field(g, 5, 0.0, 1.0), {3}};
    BodyMarker b2{9, 1.0 / 3.0, random_field(g, 6, 0.0, 1.0), {4, 7}};
    s.state.bodies = {b1, b2};
    s.config_json = R"({"grid": {"dim": 2}})";
    s.orientation[3] = {{{std::cos(0.3), -std::sin(0.3), 0.0}, {std::sin(0.3), std::cos(0.3), 0.0}, {0.0, 0.0, 1.0}}};
    return s;
}

bool same_bits(const ScalarField& a, const ScalarField& b) {
    return a.grid == b.grid && a.size() == b.size() &&
           std::memcmp(a.values.data(), b.values.data(), a.size() * sizeof(double)) == 0;
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path tmp(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "penfsi_test_io";
    fs::create_directories(d);
    return d / name;
}

std::uint64_t le64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

TEST_CASE("snapshot round trip is bit-exact") {
    for (int dim : {2, 3}) {
        const Snapshot s = sample_snapshot(dim, dim == 2 ? 16 : 8);
        const auto bytes = encode_snapshot(s);
        const Snapshot r = decode_snapshot(bytes);
        CHECK(std::memcmp(&r.state.t, &s.state.t, sizeof(double)) == 0);
        CHECK(r.state.step == s.state.step);
        CHECK(r.state.grid() == s.state.grid());
        CHECK(same_bits(r.state.rho, s.state.rho));
        CHECK(same_bits(r.state.mu, s.state.mu));
        CHECK(same_bits(r.state.pressure, s.state.pressure));
        for (int a = 0; a < dim; ++a) CHECK(same_bits(r.state.u[a], s.state.u[a]));
        REQUIRE(r.state.bodies.size() == 2);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(r.state.bodies[k].id == s.state.bodies[k].id);
            CHECK(r.state.bodies[k].density == s.state.bodies[k].density);
            CHECK(r.state.bodies[k].members == s.state.bodies[k].members);
            CHECK(same_bits(r.state.bodies[k].a, s.state.bodies[k].a));
        }
        CHECK(std::signbit(r.state.u[0][0]));
        CHECK(r.config_json == s.config_json);
        CHECK(r.orientation == s.orientation);
        // write -> read -> write gives the same bytes
        CHECK(encode_snapshot(r) == bytes);
    }
}

TEST_CASE("snapshot files: write, read, rewrite byte-identical") {
    const Snapshot s = sample_snapshot(2, 32);
    const auto p1 = tmp("a.bin"), p2 = tmp("b.bin");
    write_snapshot(p1.string(), s);
    write_snapshot(p2.string(), read_snapshot(p1.string()));
    CHECK(file_bytes(p1) == file_bytes(p2));
    CHECK(file_crc32(p1.string()) == file_crc32(p2.string()));
    CHECK(snapshot_metadata(p1.string()).find("\"marker_9\"") != std::string::npos);
    CHECK_THROWS_AS(read_snapshot(tmp("missing.bin").string()), SnapshotError);
}

TEST_CASE("snapshot layout: little-endian header and payload") {
    Snapshot s;
    const auto g = make_grid(2, 1.0, 8);
    s.state.rho = ScalarField(g, 1.5);
    s.state.mu = ScalarField(g, -2.0);
    s.state.pressure = ScalarField(g, 0.0);
    s.state.u = VectorField(g, 0.25);
    const auto b = encode_snapshot(s);
    CHECK(std::string(b.begin(), b.begin() + 8) == "PENFSNAP");
    CHECK((b[8] | b[9] << 8 | b[10] << 16 | b[11] << 24) == static_cast<int>(kSnapshotVersion));
    const std::uint64_t meta = le64(&b[16]), payload = le64(&b[24]);
    CHECK(payload == 5u * 64u * 8u);
    CHECK(b.size() == 64 + meta + payload + 4);
    for (std::size_t i = 32; i < 64; ++i) CHECK(b[i] == 0);
    // IEEE 754: 1.5 = 0x3FF8000000000000, -2 = 0xC000000000000000, written low byte first
    const unsigned char* p = &b[64 + meta];
    const unsigned char one_half[8] = {0, 0, 0, 0, 0, 0, 0xF8, 0x3F};
    const unsigned char minus_two[8] = {0, 0, 0, 0, 0, 0, 0, 0xC0};
    CHECK(std::memcmp(p, one_half, 8) == 0);
    CHECK(std::memcmp(p + 64 * 8, minus_two, 8) == 0);
    // a reader assembling bytes by shifts (host-order independent) sees the values
    const std::uint64_t bits = le64(p + 3 * 64 * 8);
    double v;
    std::memcpy(&v, &bits, 8);
    CHECK(v == 0.25);
}

TEST_CASE("snapshot corruption is detected") {
    const auto good = encode_snapshot(sample_snapshot(2, 16));
    SUBCASE("truncation raises a checksum error") {
        for (std::size_t cut : {std::size_t{1}, std::size_t{4}, good.size() / 2, good.size() - 40}) {
            auto b = good;
            b.resize(b.size() - cut);
            CHECK_THROWS_AS(decode_snapshot(b), SnapshotChecksumError);
        }
        CHECK_THROWS_AS(decode_snapshot({}), SnapshotChecksumError);
        const auto p = tmp("trunc.bin");
        std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(good.data()), 1000);
        CHECK_THROWS_AS(read_snapshot(p.string()), SnapshotChecksumError);
    }
    SUBCASE("flipped payload bit") {
        auto b = good;
        b[b.size() - 100] ^= 0x10;
        CHECK_THROWS_AS(decode_snapshot(b), SnapshotChecksumError);
    }
    SUBCASE("flipped metadata byte") {
        auto b = good;
        b[70] ^= 0x01;
        CHECK_THROWS_AS(decode_snapshot(b), SnapshotChecksumError);
    }
    SUBCASE("version mismatch") {
        auto b = good;
        b[8] = static_cast<unsigned char>(kSnapshotVersion + 1);
        CHECK_THROWS_AS(decode_snapshot(b), SnapshotVersionError);
    }
    SUBCASE("not a snapshot") {
        auto b = good;
        b[0] = 'X';
        CHECK_THROWS_AS(decode_snapshot(b), SnapshotError);
    }
}

TEST_CASE("file_crc32 matches the standard check value") {
    const auto p = tmp("crc.txt");
    std::ofstream(p, std::ios::binary) << "123456789";
    CHECK(file_crc32(p.string()) == 0xCBF43926u);
}

TEST_CASE("encode refuses inconsistent fields") {
    Snapshot s = sample_snapshot(2, 16);
    s.state.mu = ScalarField(make_grid(2, 1.0, 16));
    CHECK_THROWS_AS(encode_snapshot(s), std::invalid_argument);
}
