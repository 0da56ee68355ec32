#pragma once
// Grid and field data model plus the PATF on-disk field format.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pat {

// Malformed files, bad headers, shape mismatches in stored or passed data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure: CFL violation, non-finite values, line search collapse.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GridSpec {
    int nx = 0;       // columns
    int ny = 0;       // rows
    double dx = 0.0;  // cell size [m], square cells

    bool operator==(const GridSpec&) const = default;

    std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

    // nx, ny >= 4; dx positive and finite
    void validate() const;
};

// Rectangular grid of doubles, row-major: value at (row j, col i) is values[j*nx + i].
struct ScalarField2D {
    GridSpec grid;
    std::vector<double> values;

    ScalarField2D() = default;
    ScalarField2D(const GridSpec& g, double fill = 0.0)
        : grid(g), values(g.cells(), fill) {}

    double& at(int j, int i) { return values[static_cast<std::size_t>(j) * grid.nx + i]; }
    double at(int j, int i) const { return values[static_cast<std::size_t>(j) * grid.nx + i]; }

    bool operator==(const ScalarField2D&) const = default;

    // grid valid, length == nx*ny, all values finite
    void validate(const char* what = "field") const;
};

double min_value(const ScalarField2D& f);
double max_value(const ScalarField2D& f);

// Sound speed c [m/s] and mass density rho [kg/m^3] on a shared grid.
struct Medium {
    ScalarField2D c;
    ScalarField2D rho;

    // both fields valid, strictly positive, same grid
    void validate() const;
};

Medium uniform_medium(const GridSpec& g, double c, double rho = 1.0);

// PATF: magic "PATF", u32le version=1, u32le ndim=2, u64le dims (ny, nx),
// then ny*nx IEEE-754 binary64 little-endian values, row-major.
std::vector<std::uint8_t> encode_field(const ScalarField2D& field);
ScalarField2D decode_field(const std::uint8_t* data, std::size_t size);
ScalarField2D decode_field(const std::vector<std::uint8_t>& bytes);

void write_field(const std::string& path, const ScalarField2D& field);
ScalarField2D read_field(const std::string& path);

}  // namespace pat
