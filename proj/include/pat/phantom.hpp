#pragma once
// Simplified Shepp-Logan phantom generation: six nested elliptical regions
// with fixed per-region initial pressure and sound speed, randomized
// geometry for regions 1, 3, 4 and 5, plus full simulated dataset output.
//
// All randomness comes from std::mt19937_64 whose raw 64-bit sequence is
// pinned by the C++ standard; doubles are derived as (x >> 11) * 2^-53, so
// identical seeds give identical phantoms on every platform.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pat/field.hpp"
#include "pat/wave.hpp"

namespace pat {

struct RegionValues {
    double p0 = 0.0;  // dimensionless initial pressure
    double c = 0.0;   // sound speed [m/s]
};

// Region table, index 1..6.
RegionValues region_values(int index);

inline constexpr double kBackgroundP0 = 0.0;
inline constexpr double kBackgroundC = 1500.0;  // water-like ambient outside the phantom
inline constexpr double kSpeedMin = 1480.0;
inline constexpr double kSpeedMax = 3198.0;

// Ellipse in pixel coordinates: center (cx cols, cy rows), semi-axes in
// cells, rotation in radians about the center (row axis points down).
struct EllipseSpec {
    double cx = 0.0, cy = 0.0;
    double a = 0.0, b = 0.0;
    double theta = 0.0;
};

struct PhantomSpec {
    GridSpec grid;
    std::uint64_t seed = 0;
    std::array<EllipseSpec, 6> ellipses;  // ellipses[r-1] for region r
    std::vector<int> omit_regions;        // sorted, excluded at rasterization
};

// Deterministic in (grid, seed, omit): draws region 1/3/4/5 jitter and scale
// from the seeded generator, rejecting draws that leave region 2's outer
// ellipse (100 attempts, then the nominal axes shrink by 0.9 and it retries).
PhantomSpec make_phantom_spec(const GridSpec& grid, std::uint64_t seed,
                              const std::vector<int>& omit_regions = {});

struct PhantomSample {
    GridSpec grid;
    std::vector<int> labels;  // row-major region index per pixel, 0 = outside
    ScalarField2D p0;
    ScalarField2D c;
    std::optional<SensorData> g;  // filled once simulated

    int label_at(int j, int i) const { return labels[static_cast<std::size_t>(j) * grid.nx + i]; }
};

// Paint order 2, 1, 3, 4, 5, 6; later regions overwrite earlier ones.
PhantomSample rasterize_phantom(const PhantomSpec& spec);

PhantomSample generate_phantom(const GridSpec& grid, std::uint64_t seed,
                               const std::vector<int>& omit_regions = {});

// All boundary pixels of the imaging region, clockwise from the top-left
// pixel: top row left to right, right column downward, bottom row right to
// left, left column upward.
SensorArray sensor_layout(const GridSpec& grid);

// Per-sample seed derivation: splitmix64(master + (index+1) * golden gamma).
std::uint64_t sample_seed(std::uint64_t master_seed, int sample_index);

struct DatasetParams {
    int n_train = 0;
    int n_test = 0;
    GridSpec grid;
    std::uint64_t seed = 0;
    int n_steps = 652;
    double cfl = 0.3;
    int pml_cells = 10;
    std::vector<int> omit_regions;
};

struct DatasetEntry {
    int index = 0;
    bool is_train = true;
    std::uint64_t seed = 0;
    std::string dir;  // relative to the dataset root
};

struct DatasetManifest {
    DatasetParams params;
    SimConfig sim;
    std::vector<DatasetEntry> entries;
    std::string root;  // directory holding manifest.txt
};

// Writes <out_dir>/sample_<idx>/{p0,c,labels,g}.patf for every sample plus
// manifest.txt; dt is fixed against the global table maximum speed so one
// config serves every phantom.
DatasetManifest generate_dataset(const DatasetParams& params, const std::string& out_dir);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

}  // namespace pat
