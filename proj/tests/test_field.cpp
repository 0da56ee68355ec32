#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "pat/field.hpp"
#include "pat/rng.hpp"

using namespace pat;

namespace {

ScalarField2D random_field(int nx, int ny, std::uint64_t seed) {
    ScalarField2D f(GridSpec{nx, ny, 1.0});
    std::mt19937_64 rng(seed);
    for (double& v : f.values) v = rng_uniform(rng, -100.0, 100.0);
    return f;
}

}  // namespace

TEST_CASE("zero 4x4 field encodes to 156 bytes of header plus zero payload") {
    const ScalarField2D f(GridSpec{4, 4, 1.0}, 0.0);
    const auto bytes = encode_field(f);
    CHECK(bytes.size() == 156);  // 28 header + 128 payload
    CHECK(bytes[0] == 0x50);
    CHECK(bytes[1] == 0x41);
    CHECK(bytes[2] == 0x54);
    CHECK(bytes[3] == 0x46);
    for (std::size_t k = 28; k < bytes.size(); ++k) CHECK(bytes[k] == 0);
}

TEST_CASE("payload starts with the IEEE-754 bytes of values[0]") {
    ScalarField2D f(GridSpec{4, 4, 1.0}, 0.0);
    f.values[0] = 1.0;
    const auto bytes = encode_field(f);
    const std::uint8_t expected[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    for (int k = 0; k < 8; ++k) CHECK(bytes[28 + k] == expected[k]);
}

TEST_CASE("encode/decode round-trips bit-exactly over 100 seeded random fields") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const ScalarField2D f = random_field(64, 64, seed);
        const ScalarField2D back = decode_field(encode_field(f));
        REQUIRE(back.grid.nx == f.grid.nx);
        REQUIRE(back.grid.ny == f.grid.ny);
        REQUIRE(back.values == f.values);
    }
}

TEST_CASE("decode(encode) then encode again reproduces the bytes") {
    const ScalarField2D f = random_field(9, 5, 42);
    const auto bytes = encode_field(f);
    CHECK(encode_field(decode_field(bytes)) == bytes);
}

TEST_CASE("row-major indexing places (row j, col i) at j*nx + i") {
    ScalarField2D f(GridSpec{3, 4, 1.0}, 0.0);  // 3 cols, 4 rows
    int v = 0;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 3; ++i) f.at(j, i) = ++v;
    CHECK(f.values[0] == 1);
    CHECK(f.values[1 * 3 + 2] == 6);  // row 1, col 2
    CHECK(f.values[3 * 3 + 0] == 10); // row 3, col 0
}

TEST_CASE("decode rejects corrupted inputs with distinct diagnostics") {
    const ScalarField2D f = random_field(8, 8, 7);
    auto bytes = encode_field(f);

    SUBCASE("corrupted magic") {
        bytes[0] = 'X';
        CHECK_THROWS_WITH_AS(decode_field(bytes), doctest::Contains("bad magic"), DataError);
    }
    SUBCASE("unsupported version") {
        bytes[4] = 2;
        CHECK_THROWS_WITH_AS(decode_field(bytes), doctest::Contains("version"), DataError);
    }
    SUBCASE("payload shortened by 8 bytes") {
        bytes.resize(bytes.size() - 8);
        CHECK_THROWS_WITH_AS(decode_field(bytes), doctest::Contains("truncated payload"),
                             DataError);
    }
    SUBCASE("non-finite payload") {
        // 0x7FF0000000000000 is +inf
        for (int k = 0; k < 8; ++k) bytes[28 + k] = 0;
        bytes[28 + 6] = 0xF0;
        bytes[28 + 7] = 0x7F;
        CHECK_THROWS_AS(decode_field(bytes), NumericError);
    }
}

TEST_CASE("encode refuses non-finite values") {
    ScalarField2D f(GridSpec{4, 4, 1.0}, 0.0);
    f.values[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(encode_field(f), NumericError);
}

TEST_CASE("grid invariants are enforced") {
    CHECK_THROWS_AS(GridSpec({3, 8, 1e-4}).validate(), DataError);
    CHECK_THROWS_AS(GridSpec({8, 8, 0.0}).validate(), DataError);
    CHECK_NOTHROW(GridSpec({4, 4, 1e-4}).validate());
}

TEST_CASE("file round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "pat_test_field";
    fs::create_directories(dir);
    const ScalarField2D f = random_field(17, 11, 3);
    const std::string path = (dir / "f.patf").string();
    write_field(path, f);
    const ScalarField2D back = read_field(path);
    CHECK(back.values == f.values);
    fs::remove_all(dir);
}
