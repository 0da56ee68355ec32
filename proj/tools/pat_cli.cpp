// Command-line front end: phantom and dataset generation, forward
// simulation, classical and learned reconstruction, training, metrics and
// image export. Exit codes: 0 success, 2 usage error, 3 data error,
// 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pat/adjoint.hpp"
#include "pat/field.hpp"
#include "pat/metrics.hpp"
#include "pat/phantom.hpp"
#include "pat/recon.hpp"
#include "pat/selftest.hpp"
#include "pat/srnet.hpp"
#include "pat/wave.hpp"

namespace fs = std::filesystem;
using namespace pat;

namespace {

// Full resolved configuration next to every command's outputs; re-running
// the recorded command line reproduces the outputs bit-exactly.
void write_run_file(const std::string& path, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "command = " << command << "\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

std::string shell_quote(const std::string& s) {
    if (s.find_first_of(" \t\"'") == std::string::npos) return s;
    return "'" + s + "'";
}

std::string full_command(int argc, char** argv) {
    std::string cmd;
    for (int i = 0; i < argc; ++i) {
        if (i) cmd += " ";
        cmd += shell_quote(argv[i]);
    }
    return cmd;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

ScalarField2D read_field_dx(const std::string& path, double dx) {
    ScalarField2D f = read_field(path);
    f.grid.dx = dx;
    return f;
}

SimConfig sim_config_for_sample(const std::string& sample_dir, const std::string& manifest_path,
                                const std::string& config_path) {
    if (!config_path.empty()) return read_sim_config(config_path);
    std::string mpath = manifest_path;
    if (mpath.empty()) mpath = (fs::path(sample_dir).parent_path() / "manifest.txt").string();
    if (!fs::exists(mpath))
        throw DataError("no manifest found at " + mpath + "; pass --manifest or --config");
    return read_manifest(mpath).sim;
}

struct EvalOptions {
    std::string pred_dir, truth_dir, out_csv;
    bool per_iter = false;
};

int run_eval(const EvalOptions& opt, const std::string& command) {
    const DatasetManifest truth = read_manifest((fs::path(opt.truth_dir) / "manifest.txt").string());
    std::vector<MetricsRow> rows;
    int matched = 0;
    for (const auto& e : truth.entries) {
        const fs::path pred_sample = fs::path(opt.pred_dir) / e.dir;
        const fs::path truth_sample = fs::path(truth.root) / e.dir;
        if (!fs::exists(pred_sample)) continue;
        ++matched;
        const ScalarField2D p0_true = read_field((truth_sample / "p0.patf").string());
        const ScalarField2D c_true = read_field((truth_sample / "c.patf").string());
        if (opt.per_iter) {
            for (int it = 1;; ++it) {
                const fs::path p0f = pred_sample / ("p0_iter" + std::to_string(it) + ".patf");
                const fs::path cf = pred_sample / ("c_iter" + std::to_string(it) + ".patf");
                if (!fs::exists(p0f) || !fs::exists(cf)) break;
                rows.push_back({e.dir, it, compute_mae(read_field(p0f.string()), p0_true),
                                compute_mae(read_field(cf.string()), c_true)});
            }
        } else {
            const fs::path p0f = pred_sample / "p0_hat.patf";
            const fs::path cf = pred_sample / "c_hat.patf";
            if (!fs::exists(p0f) || !fs::exists(cf))
                throw DataError("missing p0_hat.patf/c_hat.patf under " + pred_sample.string());
            rows.push_back({e.dir, 0, compute_mae(read_field(p0f.string()), p0_true),
                            compute_mae(read_field(cf.string()), c_true)});
        }
    }
    if (matched == 0) throw DataError("no prediction directories matched the truth manifest");
    write_metrics_csv(opt.out_csv, rows);
    write_run_file(opt.out_csv + ".run.txt", command,
                   {{"pred", opt.pred_dir},
                    {"truth", opt.truth_dir},
                    {"per_iter", opt.per_iter ? "true" : "false"},
                    {"samples_matched", std::to_string(matched)}});
    std::cout << "wrote " << opt.out_csv << " (" << rows.size() << " rows, " << matched
              << " samples)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"photoacoustic joint reconstruction toolbox"};
    app.require_subcommand(1);
    const std::string command = full_command(argc, argv);

    // phantom
    auto* sc_phantom = app.add_subcommand("phantom", "generate one phantom (p0, c, labels)");
    int ph_grid = 64;
    std::uint64_t ph_seed = 0;
    std::vector<int> ph_omit;
    std::string ph_out;
    double ph_dx = 1e-4;
    sc_phantom->add_option("--grid", ph_grid, "square grid size")->capture_default_str();
    sc_phantom->add_option("--seed", ph_seed, "phantom seed")->capture_default_str();
    sc_phantom->add_option("--omit-region", ph_omit, "region indices to omit (repeatable)");
    sc_phantom->add_option("--dx", ph_dx, "grid spacing [m]")->capture_default_str();
    sc_phantom->add_option("--out", ph_out, "output directory")->required();

    // dataset
    auto* sc_dataset = app.add_subcommand("dataset", "generate a simulated train/test dataset");
    DatasetParams ds;
    ds.grid = GridSpec{64, 64, 1e-4};
    int ds_grid = 64;
    std::string ds_out;
    double ds_dx = 1e-4;
    sc_dataset->add_option("--train", ds.n_train, "training samples")->capture_default_str();
    sc_dataset->add_option("--test", ds.n_test, "test samples")->capture_default_str();
    sc_dataset->add_option("--grid", ds_grid, "square grid size")->capture_default_str();
    sc_dataset->add_option("--seed", ds.seed, "master seed")->capture_default_str();
    sc_dataset->add_option("--steps", ds.n_steps, "recorded time samples")->capture_default_str();
    sc_dataset->add_option("--cfl", ds.cfl, "Courant number")->capture_default_str();
    sc_dataset->add_option("--pml", ds.pml_cells, "absorbing collar cells")->capture_default_str();
    sc_dataset->add_option("--omit-region", ds.omit_regions, "region indices to omit");
    sc_dataset->add_option("--dx", ds_dx, "grid spacing [m]")->capture_default_str();
    sc_dataset->add_option("--out", ds_out, "output directory")->required();

    // simulate
    auto* sc_sim = app.add_subcommand("simulate", "forward-simulate sensor data for p0 and c");
    std::string sim_p0, sim_c, sim_cfg, sim_out;
    sc_sim->add_option("--p0", sim_p0, "initial pressure field (PATF)")->required();
    sc_sim->add_option("--c", sim_c, "sound speed field (PATF)")->required();
    sc_sim->add_option("--config", sim_cfg, "simulation config (key = value)")->required();
    sc_sim->add_option("--out", sim_out, "output sensor data (PATF)")->required();

    // recon-classical
    auto* sc_rc = app.add_subcommand("recon-classical", "proximal-gradient joint reconstruction");
    std::string rc_data, rc_manifest, rc_config, rc_out, rc_reg = "tv";
    ReconConfig rc_cfg;
    int rc_iters = 100;
    bool rc_freeze = false;
    sc_rc->add_option("--data", rc_data, "sample directory containing g.patf")->required();
    sc_rc->add_option("--manifest", rc_manifest, "dataset manifest (default: sibling)");
    sc_rc->add_option("--config", rc_config, "simulation config overriding the manifest");
    sc_rc->add_option("--beta", rc_cfg.beta, "regularization weight")->capture_default_str();
    sc_rc->add_option("--reg", rc_reg, "regularizer: tv | none")->capture_default_str();
    sc_rc->add_option("--iters", rc_iters, "outer iteration cap")->capture_default_str();
    sc_rc->add_flag("--freeze-c", rc_freeze, "keep the speed fixed at its initializer");
    sc_rc->add_option("--tv-iters", rc_cfg.tv_iters, "prox dual iterations")->capture_default_str();
    sc_rc->add_option("--tol", rc_cfg.tol, "relative fidelity stop")->capture_default_str();
    sc_rc->add_option("--out", rc_out, "output directory")->required();

    // train
    auto* sc_train = app.add_subcommand("train", "train the unrolled stages greedily");
    std::string tr_dataset, tr_out;
    int tr_stages = 4;
    TrainConfig tr_cfg;
    std::uint64_t tr_seed = 0;
    sc_train->add_option("--dataset", tr_dataset, "dataset directory")->required();
    sc_train->add_option("--stages", tr_stages, "unrolled stage count")->capture_default_str();
    sc_train->add_option("--epochs", tr_cfg.epochs, "epochs per stage")->capture_default_str();
    sc_train->add_option("--batch", tr_cfg.batch_size, "minibatch size")->capture_default_str();
    sc_train->add_option("--lr", tr_cfg.lr, "Adam learning rate")->capture_default_str();
    sc_train->add_option("--seed", tr_seed, "training seed")->capture_default_str();
    sc_train->add_option("--out", tr_out, "output weights directory")->required();

    // recon-dl
    auto* sc_dl = app.add_subcommand("recon-dl", "learned unrolled reconstruction");
    std::string dl_data, dl_weights, dl_out, dl_manifest, dl_config;
    sc_dl->add_option("--data", dl_data, "sample directory containing g.patf")->required();
    sc_dl->add_option("--weights", dl_weights, "weights directory")->required();
    sc_dl->add_option("--manifest", dl_manifest, "dataset manifest (default: sibling)");
    sc_dl->add_option("--config", dl_config, "simulation config overriding the manifest");
    sc_dl->add_option("--out", dl_out, "output directory")->required();

    // eval
    auto* sc_eval = app.add_subcommand("eval", "mean absolute error metrics");
    EvalOptions ev;
    sc_eval->add_option("--pred", ev.pred_dir, "prediction directory")->required();
    sc_eval->add_option("--truth", ev.truth_dir, "dataset directory with manifest.txt")->required();
    sc_eval->add_flag("--per-iter", ev.per_iter, "evaluate every recorded iterate");
    sc_eval->add_option("--out", ev.out_csv, "output CSV path")->required();

    // selftest
    auto* sc_self = app.add_subcommand("selftest", "numerical health checks");
    std::string suite = "all";
    sc_self->add_option("--suite", suite, "adjoint | gradcheck | energy | all")
        ->capture_default_str();

    // export-pgm
    auto* sc_pgm = app.add_subcommand("export-pgm", "window a field into an 8-bit PGM");
    std::string pgm_in, pgm_out;
    double pgm_lo = 0.0, pgm_hi = 1.0;
    sc_pgm->add_option("--in", pgm_in, "input field (PATF)")->required();
    sc_pgm->add_option("--lo", pgm_lo, "window low edge")->required();
    sc_pgm->add_option("--hi", pgm_hi, "window high edge")->required();
    sc_pgm->add_option("--out", pgm_out, "output PGM path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sc_phantom) {
            const GridSpec grid{ph_grid, ph_grid, ph_dx};
            const PhantomSample sample = generate_phantom(grid, ph_seed, ph_omit);
            fs::create_directories(ph_out);
            write_field((fs::path(ph_out) / "p0.patf").string(), sample.p0);
            write_field((fs::path(ph_out) / "c.patf").string(), sample.c);
            ScalarField2D labels(grid);
            for (std::size_t k = 0; k < sample.labels.size(); ++k)
                labels.values[k] = sample.labels[k];
            write_field((fs::path(ph_out) / "labels.patf").string(), labels);
            std::ostringstream omit;
            for (int r : ph_omit) omit << r << " ";
            write_run_file((fs::path(ph_out) / "run.txt").string(), command,
                           {{"grid", std::to_string(ph_grid)},
                            {"dx", fmt(ph_dx)},
                            {"seed", std::to_string(ph_seed)},
                            {"omit_regions", omit.str()}});
            std::cout << "wrote phantom to " << ph_out << "\n";
        } else if (*sc_dataset) {
            ds.grid = GridSpec{ds_grid, ds_grid, ds_dx};
            const DatasetManifest m = generate_dataset(ds, ds_out);
            write_run_file((fs::path(ds_out) / "run.txt").string(), command,
                           {{"n_train", std::to_string(ds.n_train)},
                            {"n_test", std::to_string(ds.n_test)},
                            {"grid", std::to_string(ds_grid)},
                            {"dx", fmt(ds_dx)},
                            {"seed", std::to_string(ds.seed)},
                            {"n_steps", std::to_string(ds.n_steps)},
                            {"cfl", fmt(ds.cfl)},
                            {"pml_cells", std::to_string(ds.pml_cells)},
                            {"dt", fmt(m.sim.dt)}});
            std::cout << "wrote " << m.entries.size() << " samples to " << ds_out << "\n";
        } else if (*sc_sim) {
            const SimConfig cfg = read_sim_config(sim_cfg);
            const ScalarField2D p0 = read_field_dx(sim_p0, cfg.grid.dx);
            const ScalarField2D c = read_field_dx(sim_c, cfg.grid.dx);
            const Medium medium{c, ScalarField2D(c.grid, 1.0)};
            const SensorData g = simulate_forward(medium, p0, sensor_layout(cfg.grid), cfg);
            write_field(sim_out, sensor_data_as_field(g));
            write_run_file(sim_out + ".run.txt", command,
                           {{"p0", sim_p0}, {"c", sim_c}, {"config", sim_cfg},
                            {"n_sensors", std::to_string(g.n_sensors)},
                            {"n_steps", std::to_string(g.n_steps)},
                            {"dt", fmt(g.dt)}});
            std::cout << "wrote " << sim_out << " (" << g.n_sensors << "x" << g.n_steps << ")\n";
        } else if (*sc_rc) {
            const SimConfig cfg = sim_config_for_sample(rc_data, rc_manifest, rc_config);
            const SensorData g = sensor_data_from_field(
                read_field((fs::path(rc_data) / "g.patf").string()), cfg.dt);
            rc_cfg.max_outer = rc_iters;
            rc_cfg.freeze_c = rc_freeze;
            if (rc_reg == "tv") rc_cfg.reg = Regularizer::tv;
            else if (rc_reg == "none") rc_cfg.reg = Regularizer::none;
            else throw CLI::ValidationError("--reg", "expected tv or none");
            const ScalarField2D p0_init(cfg.grid, 0.0);
            const ScalarField2D c_init(cfg.grid, kBackgroundC);
            const ReconResult res =
                reconstruct_classical(g, p0_init, c_init, rc_cfg, cfg, sensor_layout(cfg.grid));
            fs::create_directories(rc_out);
            write_field((fs::path(rc_out) / "p0_hat.patf").string(), res.p0);
            write_field((fs::path(rc_out) / "c_hat.patf").string(), res.c);
            write_trace_csv((fs::path(rc_out) / "trace.csv").string(), res);
            write_run_file((fs::path(rc_out) / "run.txt").string(), command,
                           {{"data", rc_data},
                            {"beta", fmt(rc_cfg.beta)},
                            {"reg", rc_reg},
                            {"iters", std::to_string(rc_iters)},
                            {"freeze_c", rc_freeze ? "true" : "false"},
                            {"initial_F", fmt(res.initial_fidelity)},
                            {"final_F", fmt(res.trace.empty() ? res.initial_fidelity
                                                              : res.trace.back().fidelity)},
                            {"iterations_run", std::to_string(res.trace.size())},
                            {"diagnostic", res.diagnostic.empty() ? "none" : res.diagnostic}});
            std::cout << "recon-classical: " << res.trace.size() << " iterations, F "
                      << res.initial_fidelity << " -> "
                      << (res.trace.empty() ? res.initial_fidelity : res.trace.back().fidelity)
                      << "\n";
            if (!res.diagnostic.empty()) std::cout << "note: " << res.diagnostic << "\n";
        } else if (*sc_train) {
            tr_cfg.validate();
            if (tr_stages < 1) throw CLI::ValidationError("--stages", "must be >= 1");
            const DatasetManifest m =
                read_manifest((fs::path(tr_dataset) / "manifest.txt").string());
            fs::create_directories(tr_out);
            StageWeights weights;
            std::ofstream log((fs::path(tr_out) / "train_log.csv").string(), std::ios::trunc);
            log << "stage,epoch,mean_loss\n";
            log.precision(17);
            for (int k = 0; k < tr_stages; ++k) {
                EpochLog elog;
                SRNetParams stage =
                    train_stage(k, m, weights, tr_cfg, sample_seed(tr_seed, 1000 + k), &elog);
                weights.stages.push_back(std::move(stage));
                for (std::size_t ep = 0; ep < elog.epoch_mean_loss.size(); ++ep)
                    log << k << "," << (ep + 1) << "," << elog.epoch_mean_loss[ep] << "\n";
                std::cout << "stage " << k << ": epoch-1 loss " << elog.epoch_mean_loss.front()
                          << ", final " << elog.epoch_mean_loss.back() << "\n";
            }
            write_stage_manifest(tr_out, weights);
            write_run_file((fs::path(tr_out) / "run.txt").string(), command,
                           {{"dataset", tr_dataset},
                            {"stages", std::to_string(tr_stages)},
                            {"epochs", std::to_string(tr_cfg.epochs)},
                            {"batch", std::to_string(tr_cfg.batch_size)},
                            {"lr", fmt(tr_cfg.lr)},
                            {"seed", std::to_string(tr_seed)}});
            std::cout << "wrote weights to " << tr_out << "\n";
        } else if (*sc_dl) {
            const SimConfig cfg = sim_config_for_sample(dl_data, dl_manifest, dl_config);
            const SensorData g = sensor_data_from_field(
                read_field((fs::path(dl_data) / "g.patf").string()), cfg.dt);
            const StageWeights weights = load_stage_weights(dl_weights);
            const DlResult res = reconstruct_dl(g, weights, cfg, sensor_layout(cfg.grid));
            fs::create_directories(dl_out);
            write_field((fs::path(dl_out) / "p0_hat.patf").string(), res.p0);
            write_field((fs::path(dl_out) / "c_hat.patf").string(), res.c);
            for (std::size_t k = 0; k < res.iterates.size(); ++k) {
                write_field((fs::path(dl_out) / ("p0_iter" + std::to_string(k + 1) + ".patf")).string(),
                            res.iterates[k].first);
                write_field((fs::path(dl_out) / ("c_iter" + std::to_string(k + 1) + ".patf")).string(),
                            res.iterates[k].second);
            }
            write_run_file((fs::path(dl_out) / "run.txt").string(), command,
                           {{"data", dl_data},
                            {"weights", dl_weights},
                            {"k_max", std::to_string(weights.k_max())}});
            std::cout << "recon-dl: " << weights.k_max() << " stages applied\n";
        } else if (*sc_eval) {
            return run_eval(ev, command);
        } else if (*sc_self) {
            std::vector<CheckResult> results;
            if (suite == "adjoint") results = selftest_adjoint();
            else if (suite == "gradcheck") results = selftest_gradcheck();
            else if (suite == "energy") results = selftest_energy();
            else if (suite == "all") results = selftest_all();
            else throw CLI::ValidationError("--suite", "expected adjoint, gradcheck, energy or all");
            bool all_pass = true;
            for (const CheckResult& r : results) {
                std::printf("[%s] %s: %.3e (limit %.1e)\n", r.pass ? "PASS" : "FAIL",
                            r.name.c_str(), r.worst, r.limit);
                all_pass = all_pass && r.pass;
            }
            if (!all_pass) return 4;
        } else if (*sc_pgm) {
            const ScalarField2D f = read_field(pgm_in);
            export_pgm(f, pgm_lo, pgm_hi, pgm_out);
            write_run_file(pgm_out + ".run.txt", command,
                           {{"in", pgm_in}, {"lo", fmt(pgm_lo)}, {"hi", fmt(pgm_hi)}});
            std::cout << "wrote " << pgm_out << "\n";
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
