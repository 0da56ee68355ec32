#include "pat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace pat {

double compute_mae(const ScalarField2D& a, const ScalarField2D& b) {
    if (!(a.grid == b.grid)) throw DataError("MAE fields must share one grid");
    double s = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) s += std::abs(a.values[k] - b.values[k]);
    return s / static_cast<double>(a.values.size());
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw DataError("mean of empty set");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size()));
}

void export_pgm(const ScalarField2D& field, double lo, double hi, const std::string& out_path) {
    if (!(lo < hi)) throw DataError("PGM window needs lo < hi");
    field.validate("pgm export");
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + out_path);
    out << "P5\n" << field.grid.nx << " " << field.grid.ny << "\n255\n";
    std::vector<unsigned char> row(field.grid.nx);
    for (int j = 0; j < field.grid.ny; ++j) {
        for (int i = 0; i < field.grid.nx; ++i) {
            const double t = std::clamp((field.at(j, i) - lo) / (hi - lo), 0.0, 1.0);
            row[i] = static_cast<unsigned char>(std::llround(255.0 * t));
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw DataError("write failed: " + out_path);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.precision(17);
    out << "sample_id,iter,mae_p0,mae_c\n";
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_iter;
    for (const MetricsRow& r : rows) {
        out << r.sample_id << "," << r.iter << "," << r.mae_p0 << "," << r.mae_c << "\n";
        per_iter[r.iter].first.push_back(r.mae_p0);
        per_iter[r.iter].second.push_back(r.mae_c);
    }
    for (const auto& [iter, maes] : per_iter)
        out << "mean," << iter << "," << mean_of(maes.first) << "," << mean_of(maes.second) << "\n";
    for (const auto& [iter, maes] : per_iter)
        out << "std," << iter << "," << std_of(maes.first) << "," << std_of(maes.second) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace pat
