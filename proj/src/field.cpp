#include "pat/field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace pat {

void GridSpec::validate() const {
    if (nx < 4 || ny < 4)
        throw DataError("grid must be at least 4x4, got " + std::to_string(nx) + "x" + std::to_string(ny));
    if (!(dx > 0.0) || !std::isfinite(dx))
        throw DataError("grid spacing must be positive and finite");
}

void ScalarField2D::validate(const char* what) const {
    grid.validate();
    if (values.size() != grid.cells())
        throw DataError(std::string(what) + ": value count " + std::to_string(values.size()) +
                        " does not match grid " + std::to_string(grid.nx) + "x" + std::to_string(grid.ny));
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericError(std::string(what) + ": non-finite value");
}

double min_value(const ScalarField2D& f) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : f.values) m = std::min(m, v);
    return m;
}

double max_value(const ScalarField2D& f) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : f.values) m = std::max(m, v);
    return m;
}

void Medium::validate() const {
    c.validate("sound speed");
    rho.validate("density");
    if (!(c.grid == rho.grid))
        throw DataError("sound speed and density grids differ");
    if (min_value(c) <= 0.0) throw DataError("sound speed must be positive everywhere");
    if (min_value(rho) <= 0.0) throw DataError("density must be positive everywhere");
}

Medium uniform_medium(const GridSpec& g, double c, double rho) {
    return Medium{ScalarField2D(g, c), ScalarField2D(g, rho)};
}

namespace {

constexpr std::uint8_t kMagic[4] = {0x50, 0x41, 0x54, 0x46};  // "PATF"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_field(const ScalarField2D& field) {
    field.validate("encode_field");
    std::vector<std::uint8_t> out;
    out.reserve(28 + field.values.size() * 8);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, 2);
    put_u64(out, static_cast<std::uint64_t>(field.grid.ny));
    put_u64(out, static_cast<std::uint64_t>(field.grid.nx));
    for (double v : field.values)
        put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

ScalarField2D decode_field(const std::uint8_t* data, std::size_t size) {
    if (size < 4 || std::memcmp(data, kMagic, 4) != 0)
        throw DataError("bad magic: not a PATF field");
    if (size < 28) throw DataError("truncated header");
    const std::uint32_t version = get_u32(data + 4);
    if (version != kVersion)
        throw DataError("unsupported PATF version " + std::to_string(version));
    const std::uint32_t ndim = get_u32(data + 8);
    if (ndim != 2) throw DataError("expected 2 dims, got " + std::to_string(ndim));
    const std::uint64_t ny = get_u64(data + 12);
    const std::uint64_t nx = get_u64(data + 20);
    if (nx == 0 || ny == 0 || nx > (1u << 20) || ny > (1u << 20))
        throw DataError("unreasonable dims " + std::to_string(ny) + "x" + std::to_string(nx));
    const std::size_t count = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    if (size != 28 + count * 8)
        throw DataError(size < 28 + count * 8 ? "truncated payload" : "trailing bytes after payload");

    ScalarField2D f;
    f.grid = GridSpec{static_cast<int>(nx), static_cast<int>(ny), 1.0};
    f.values.resize(count);
    const std::uint8_t* p = data + 28;
    for (std::size_t k = 0; k < count; ++k, p += 8) {
        const double v = std::bit_cast<double>(get_u64(p));
        if (!std::isfinite(v)) throw NumericError("non-finite value in field payload");
        f.values[k] = v;
    }
    return f;
}

ScalarField2D decode_field(const std::vector<std::uint8_t>& bytes) {
    return decode_field(bytes.data(), bytes.size());
}

void write_field(const std::string& path, const ScalarField2D& field) {
    const auto bytes = encode_field(field);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path);
}

ScalarField2D read_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_field(bytes);
}

}  // namespace pat
