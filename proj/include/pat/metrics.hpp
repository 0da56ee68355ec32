#pragma once
// Reconstruction quality metrics and figure-ready exports.

#include <string>
#include <vector>

#include "pat/field.hpp"

namespace pat {

// Mean over pixels of |a - b|.
double compute_mae(const ScalarField2D& a, const ScalarField2D& b);

double mean_of(const std::vector<double>& v);
// Population standard deviation (divide by n).
double std_of(const std::vector<double>& v);

// 8-bit binary PGM: v -> round(255 * clamp((v - lo)/(hi - lo), 0, 1)).
void export_pgm(const ScalarField2D& field, double lo, double hi, const std::string& out_path);

struct MetricsRow {
    std::string sample_id;
    int iter = 0;
    double mae_p0 = 0.0;
    double mae_c = 0.0;
};

// columns: sample_id, iter, mae_p0, mae_c; footer rows carry per-iteration
// mean and population std in the sample_id column.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace pat
