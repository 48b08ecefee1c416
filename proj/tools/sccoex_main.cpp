// Command-line front-end. Exit codes: 0 ok, 2 usage, 3 input error, 4 numeric failure.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sccoex/artifacts.hpp"
#include "sccoex/coexpression.hpp"
#include "sccoex/downstream.hpp"
#include "sccoex/error.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/kernels.hpp"
#include "sccoex/pipeline.hpp"
#include "sccoex/synthetic.hpp"
#include "sccoex/validation.hpp"
#include "sccoex/zero_model.hpp"

namespace fs = std::filesystem;
using namespace sccoex;

namespace {

// Maps library exceptions to exit codes, printing "<tag>-error: <message>".
int report(const std::string& tag, const std::exception& e, int code) {
    std::cerr << tag << "-error: " << e.what() << '\n';
    return code;
}

struct Inputs {
    std::string matrix, genes, cells, dispersion;

    void add_matrix(CLI::App* app) {
        app->add_option("--matrix", matrix, "Count matrix (.mtx or .tsv), as written by ingest")
            ->required();
    }
    void add_estimates(CLI::App* app) {
        app->add_option("--genes", genes, "Gene estimates CSV from estimate")->required();
        app->add_option("--cells", cells, "Cell estimates CSV from estimate")->required();
    }
    void add_dispersion(CLI::App* app) {
        app->add_option("--dispersion", dispersion, "Dispersion CSV from fit-zero")->required();
    }
};

struct Loaded {
    CountMatrix m;
    ModelParams params;
    DispersionFit fit;
    RhoMatrix rho;
};

Loaded load_all(const Inputs& in, unsigned threads) {
    Loaded l;
    l.m = load_matrix(in.matrix, format_from_path(in.matrix));
    l.params = read_estimates(l.m, in.genes, in.cells);
    l.fit = read_dispersion(l.m, in.dispersion);
    if (l.fit.mu_source != l.params.kind) {
        throw InputError("dispersion was fitted with a different estimator than the estimates given");
    }
    l.rho = chance_of_expression(l.params, l.fit, threads);
    return l;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sccoex: co-expression analysis of raw single-cell read counts"};
    app.require_subcommand(1);
    std::string stage = "usage";

    // ingest ------------------------------------------------------------------------
    std::string ingest_in, ingest_out, ingest_format = "auto";
    std::uint64_t ingest_min_total = 1;
    auto* ingest = app.add_subcommand("ingest", "Load, validate and filter a count matrix");
    ingest->add_option("--input", ingest_in, "Input matrix (.mtx MatrixMarket or .tsv dense)")->required();
    ingest->add_option("--format", ingest_format, "auto|mtx|tsv")->check(CLI::IsMember({"auto", "mtx", "tsv"}));
    ingest->add_option("--min-total", ingest_min_total, "Drop genes with fewer total reads")->check(CLI::PositiveNumber);
    ingest->add_option("--output", ingest_out, "Filtered matrix (.mtx or .tsv)")->required();

    // estimate ------------------------------------------------------------------------
    std::string est_matrix, est_genes_out, est_cells_out, est_kind = "average";
    unsigned threads = 0;
    auto* est = app.add_subcommand("estimate", "Estimate cell efficiencies and gene expression levels");
    est->add_option("--matrix", est_matrix, "Count matrix")->required();
    est->add_option("--estimator", est_kind, "average|sqrt")->check(CLI::IsMember({"average", "sqrt"}));
    est->add_option("--genes-out", est_genes_out, "Gene estimates CSV")->required();
    est->add_option("--cells-out", est_cells_out, "Cell estimates CSV")->required();
    est->add_option("--threads", threads, "Worker threads (0 = all cores)");

    // fit-zero ------------------------------------------------------------------------
    Inputs fz_in;
    std::string fz_out, fz_rho;
    double fz_tol = 1e-8;
    auto* fz = app.add_subcommand("fit-zero", "Fit per-gene dispersion from zero counts");
    fz_in.add_matrix(fz);
    fz_in.add_estimates(fz);
    fz->add_option("--output", fz_out, "Dispersion CSV (gene, a, residual, negative_a, fitted)")->required();
    fz->add_option("--rho-out", fz_rho, "Optional binary chance-of-expression matrix");
    fz->add_option("--tolerance", fz_tol, "Zero-count residual tolerance, relative to the cell count");
    fz->add_option("--threads", threads, "Worker threads (0 = all cores)");

    // coex --------------------------------------------------------------------------------
    Inputs cx_in;
    std::string cx_pairs = "all", cx_out = "csv", cx_output;
    std::size_t tile = 256;
    auto* cx = app.add_subcommand("coex", "Co-expression tests for gene pairs");
    cx_in.add_matrix(cx);
    cx_in.add_estimates(cx);
    cx_in.add_dispersion(cx);
    cx->add_option("--pairs", cx_pairs, "'all' or a file of gene pairs");
    cx->add_option("--out", cx_out, "csv|binary")->check(CLI::IsMember({"csv", "binary"}));
    cx->add_option("--output", cx_output, "Result file")->required();
    cx->add_option("--tile", tile, "Genes per tile side")->check(CLI::PositiveNumber);
    cx->add_option("--threads", threads, "Worker threads (0 = all cores)");

    // diffexp -------------------------------------------------------------------------------
    Inputs de_in;
    std::string de_conditions, de_output;
    auto* de = app.add_subcommand("diffexp", "Differential expression across cell conditions");
    de_in.add_matrix(de);
    de_in.add_estimates(de);
    de_in.add_dispersion(de);
    de->add_option("--conditions", de_conditions, "Two-column TSV: cell id, condition label")->required();
    de->add_option("--output", de_output, "CSV (gene, W, dof, p)")->required();
    de->add_option("--threads", threads, "Worker threads (0 = all cores)");

    // gdi ------------------------------------------------------------------------------------
    Inputs gd_in;
    std::string gd_coex, gd_output;
    double gd_alpha = 1e-3, gd_quantile = 1e-4, gd_floor = -10.0;
    auto* gd = app.add_subcommand("gdi", "Global differentiation index per gene");
    gd_in.add_matrix(gd);
    gd_in.add_estimates(gd);
    gd_in.add_dispersion(gd);
    gd->add_option("--coex", gd_coex, "Reuse all-pairs results from coex instead of recomputing");
    gd->add_option("--alpha", gd_alpha, "Percentile level: S is the (1 - alpha) percentile of R^2");
    gd->add_option("--quantile", gd_quantile, "Upper chi-square(1) quantile for flagging");
    gd->add_option("--floor", gd_floor, "GDI reported when S = 0");
    gd->add_option("--output", gd_output, "CSV (gene, S, GDI, flagged)")->required();
    gd->add_option("--tile", tile, "Genes per tile side")->check(CLI::PositiveNumber);
    gd->add_option("--threads", threads, "Worker threads (0 = all cores)");

    // simulate ---------------------------------------------------------------------------------
    std::string sim_config, sim_output;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
    sim->add_option("--config", sim_config, "key = value simulation config");
    sim->add_option("--output", sim_output,
                    "Output prefix: <prefix>.mtx, <prefix>_cells.csv, <prefix>_genes.csv")->required();
    sim->add_option("--threads", threads, "Worker threads (0 = all cores)");
    std::map<std::string, std::string> sim_overrides;
    for (const char* key : {"genes", "cells", "clusters", "seed", "nu_log_sd", "nu_file", "lambda_median",
                            "lambda_log_sd", "a_median", "a_log_sd", "de_fraction", "de_log_sd",
                            "params_file"}) {
        std::string flag = std::string("--") + key;
        std::replace(flag.begin() + 2, flag.end(), '_', '-');
        sim->add_option_function<std::string>(
            flag, [&sim_overrides, key](const std::string& v) { sim_overrides[key] = v; },
            std::string("Overrides config key '") + key + "'");
    }

    // plot-data ------------------------------------------------------------------------------------
    std::string plot_kind, plot_output;
    PlotInputs plot_in;
    std::string plot_coex, plot_gdi, plot_truth;
    std::vector<std::string> plot_genes, plot_cells;
    auto* plot = app.add_subcommand("plot-data", "Emit tidy x,y,series CSV for figures");
    plot->add_option("--kind", plot_kind, "pvalue-ecdf|gdi-hist|estimator-scatter")
        ->required()
        ->check(CLI::IsMember({"pvalue-ecdf", "gdi-hist", "estimator-scatter"}));
    plot->add_option("--coex", plot_coex, "coex results (pvalue-ecdf)");
    plot->add_option("--gdi", plot_gdi, "GDI CSV (gdi-hist)");
    plot->add_option("--truth", plot_truth, "Ground-truth prefix from simulate (estimator-scatter)");
    plot->add_option("--gene-estimates", plot_genes, "Gene estimates CSVs (estimator-scatter)");
    plot->add_option("--cell-estimates", plot_cells, "Cell estimates CSVs (estimator-scatter)");
    plot->add_option("--max-points", plot_in.max_points, "Subsample size for pvalue-ecdf");
    plot->add_option("--bin-width", plot_in.bin_width, "Histogram bin width for gdi-hist");
    plot->add_option("--seed", plot_in.seed, "Seed for subsampling");
    plot->add_option("--output", plot_output, "Output CSV (default: stdout)");

    // validate -------------------------------------------------------------------------------------
    ValidationOptions vopt;
    auto* val = app.add_subcommand("validate", "Run the acceptance suite");
    val->add_option("--criteria", vopt.only, "Criterion numbers to run (default: all)")->delimiter(',');
    val->add_option("--seed", vopt.seed, "Seed for the synthetic datasets");
    val->add_option("--threads", vopt.threads, "Worker threads (0 = all cores)");

    // run ----------------------------------------------------------------------------------------------
    std::string run_config;
    std::map<std::string, std::string> run_overrides;
    auto* run = app.add_subcommand("run", "Full pipeline with an artifact manifest");
    run->add_option("--config", run_config, "key = value pipeline config");
    for (const auto& key : PipelineConfig::keys()) {
        std::string flag = "--" + key;
        std::replace(flag.begin() + 2, flag.end(), '_', '-');
        run->add_option_function<std::string>(
            flag, [&run_overrides, key](const std::string& v) { run_overrides[key] = v; },
            "Overrides config key '" + key + "'");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest) {
            stage = "ingest";
            const auto fmt = ingest_format == "auto" ? format_from_path(ingest_in)
                             : ingest_format == "mtx" ? MatrixFormat::MatrixMarket
                                                      : MatrixFormat::DenseTsv;
            const auto raw = load_matrix(ingest_in, fmt);
            const auto filtered = filter_genes(raw, ingest_min_total);
            write_matrix(filtered.matrix, ingest_out, format_from_path(ingest_out));
            std::cerr << "ingest: " << raw.n_genes() << " genes x " << raw.n_cells() << " cells, kept "
                      << filtered.kept.size() << ", dropped " << (raw.n_genes() - filtered.kept.size()) << '\n';
        } else if (*est) {
            stage = "estimate";
            const auto m = load_matrix(est_matrix, format_from_path(est_matrix));
            const auto p = estimate(m, parse_estimator(est_kind), threads);
            write_estimates(p, m, est_genes_out, est_cells_out);
        } else if (*fz) {
            stage = "fit-zero";
            const auto m = load_matrix(fz_in.matrix, format_from_path(fz_in.matrix));
            const auto p = read_estimates(m, fz_in.genes, fz_in.cells);
            const auto fit = fit_dispersion(m, p, fz_tol, threads);
            write_dispersion(fit, m, fz_out);
            if (!fz_rho.empty()) write_rho_binary(chance_of_expression(p, fit, threads), fz_rho);
        } else if (*cx) {
            stage = "coex";
            const auto l = load_all(cx_in, threads);
            const bool all = cx_pairs == "all";
            CoexWriter writer(cx_output, parse_coex_format(cx_out), l.m, all);
            EngineOptions eo;
            eo.tile = tile;
            eo.threads = threads;
            try {
                if (all) {
                    if (l.m.n_genes() > 20000) {
                        std::cerr << "coex: warning: " << l.m.n_genes() << " genes give "
                                  << l.m.n_genes() * (l.m.n_genes() - 1) / 2 << " pairs\n";
                    }
                    pairwise_coex(l.m, l.rho, writer, eo);
                } else {
                    const auto pairs = load_pair_list(cx_pairs, l.m);
                    pairwise_coex_list(l.m, l.rho, pairs, writer, eo);
                }
            } catch (const PairwiseAborted& e) {
                writer.abort(e.pairs_emitted, e.what());
                throw;
            }
            writer.finish();
        } else if (*de) {
            stage = "diffexp";
            const auto l = load_all(de_in, threads);
            const auto part = load_partition(de_conditions, l.m);
            auto out = open_output(de_output);
            out << "gene,W,dof,p\n";
            for (std::size_t g = 0; g < l.m.n_genes(); ++g) {
                if (!l.fit.fitted[g]) continue;
                const auto r = diff_expression(l.m, l.rho, part, g);
                out << l.m.gene_ids()[g] << ',' << format_double(r.w) << ',' << r.dof << ','
                    << format_double(r.p_value) << '\n';
            }
        } else if (*gd) {
            stage = "gdi";
            const auto l = load_all(gd_in, threads);
            GdiOptions go{gd_alpha, gd_floor};
            GdiScores scores;
            if (!gd_coex.empty()) {
                const auto cols = read_coex(gd_coex, &l.m);
                scores = gdi_scores(cols.r, l.m.n_genes(), go);
            } else {
                GdiAccumulator acc(l.m.n_genes(), go);
                EngineOptions eo;
                eo.tile = tile;
                eo.threads = threads;
                pairwise_coex(l.m, l.rho, acc, eo);
                scores = acc.finalize();
            }
            write_gdi(scores, gdi_threshold_test(scores, gd_quantile), l.m, gd_output);
        } else if (*sim) {
            stage = "simulate";
            auto kv = sim_config.empty() ? KeyValueConfig{} : KeyValueConfig::load(sim_config);
            for (const auto& [k, v] : sim_overrides) kv.set(k, v);
            const fs::path base = sim_config.empty() ? fs::path{} : fs::path(sim_config).parent_path();
            const auto cfg = synth_config_from(kv, base);
            const auto data = generate(cfg, threads);
            write_matrix_market(data.matrix, sim_output + ".mtx");
            write_ground_truth(data.truth, data.matrix, sim_output);
        } else if (*plot) {
            stage = "plot-data";
            plot_in.coex = plot_coex;
            plot_in.gdi = plot_gdi;
            plot_in.truth_prefix = plot_truth;
            for (const auto& p : plot_genes) plot_in.gene_estimates.emplace_back(p);
            for (const auto& p : plot_cells) plot_in.cell_estimates.emplace_back(p);
            const auto kind = parse_plot_kind(plot_kind);
            if (plot_output.empty()) {
                emit_plot_data(kind, plot_in, std::cout);
            } else {
                auto out = open_output(plot_output);
                emit_plot_data(kind, plot_in, out);
            }
        } else if (*val) {
            stage = "validate";
            std::cout << "kernels: " << kernels::to_string(kernels::best().isa) << '\n';
            bool all = true;
            run_acceptance(vopt, [&](const CriterionResult& r) {
                all = all && r.pass;
                std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << "criterion " << r.id << ": " << r.name
                          << " (" << r.seconds << "s) -- " << r.detail << std::endl;
            });
            return all ? kExitOk : kExitNumeric;
        } else if (*run) {
            stage = "run";
            auto kv = run_config.empty() ? KeyValueConfig{} : KeyValueConfig::load(run_config);
            const fs::path base = run_config.empty() ? fs::path{} : fs::path(run_config).parent_path();
            // Flags are relative to the working directory, config values to the config file.
            for (const auto& [k, v] : run_overrides) {
                if ((k == "input" || k == "output_dir") && !base.empty()) {
                    kv.set(k, fs::absolute(v).string());
                } else {
                    kv.set(k, v);
                }
            }
            const auto cfg = PipelineConfig::from(kv, base);
            const auto result = run_pipeline(cfg, &std::cerr);
            std::cout << "manifest: " << result.manifest.string() << " (" << result.artifacts.size()
                      << " artifacts)\n";
        }
    } catch (const StageError& e) {
        std::cerr << e.what() << '\n';
        return e.exit_code;
    } catch (const NumericError& e) {
        return report(stage, e, kExitNumeric);
    } catch (const PairwiseAborted& e) {
        return report(stage, e, kExitNumeric);
    } catch (const InputError& e) {
        return report(stage, e, kExitInput);
    } catch (const std::invalid_argument& e) {
        return report(stage, e, kExitInput);
    } catch (const std::out_of_range& e) {
        return report(stage, e, kExitInput);
    } catch (const fs::filesystem_error& e) {
        return report(stage, e, kExitInput);
    } catch (const std::exception& e) {
        return report(stage, e, kExitNumeric);
    }
    return kExitOk;
}
