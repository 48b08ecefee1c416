#include "sccoex/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sccoex/error.hpp"
#include "sccoex/parallel.hpp"
#include "sccoex/zero_model.hpp"

namespace sccoex {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stream ids outside the cell/gene index range.
constexpr std::uint64_t kNuStream = 0xffffffff00000001ULL;
constexpr std::uint64_t kGeneStream = 0xffffffff00000002ULL;

}  // namespace

SplitMix64 keyed_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ (b + 0x3c6ef372fe94f82bULL));
    return SplitMix64(h);
}

std::size_t SynthConfig::n_cells() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.cells;
    return n;
}

void SynthConfig::validate() const {
    if (clusters.empty()) throw std::invalid_argument("synthetic config needs at least one cluster");
    const auto genes = n_genes();
    for (const auto& c : clusters) {
        if (c.cells == 0) throw std::invalid_argument("cluster with zero cells");
        if (c.lambda.size() != genes || c.a.size() != genes) {
            throw std::invalid_argument("clusters disagree on the number of genes");
        }
        for (std::size_t g = 0; g < genes; ++g) {
            if (!(c.lambda[g] >= 0.0) || !std::isfinite(c.lambda[g])) {
                throw std::invalid_argument("lambda must be finite and >= 0");
            }
            if (!(c.a[g] >= 0.0) || !std::isfinite(c.a[g])) {
                throw std::invalid_argument("dispersion a must be finite and >= 0 for generation");
            }
        }
    }
    if (nu.kind == NuLaw::Kind::LogNormal) {
        if (!(nu.log_sd >= 0.0) || !std::isfinite(nu.log_sd)) {
            throw std::invalid_argument("nu log-sd must be finite and >= 0");
        }
    } else {
        if (nu.values.size() != n_cells()) {
            throw std::invalid_argument("explicit nu list does not match the number of cells");
        }
        for (double v : nu.values) {
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("nu values must be > 0");
        }
    }
}

Synthetic generate(const SynthConfig& config, unsigned threads) {
    config.validate();
    const std::size_t genes = config.n_genes();
    const std::size_t cells = config.n_cells();

    GroundTruth truth;
    truth.cluster_of.reserve(cells);
    for (std::size_t j = 0; j < config.clusters.size(); ++j) {
        truth.cluster_of.insert(truth.cluster_of.end(), config.clusters[j].cells,
                                static_cast<std::uint32_t>(j));
        truth.lambda.push_back(config.clusters[j].lambda);
        truth.a.push_back(config.clusters[j].a);
    }

    truth.nu.resize(cells);
    if (config.nu.kind == NuLaw::Kind::Explicit) {
        truth.nu = config.nu.values;
    } else {
        for (std::size_t c = 0; c < cells; ++c) {
            auto rng = keyed_stream(config.seed, kNuStream, c);
            std::normal_distribution<double> z(0.0, config.nu.log_sd);
            truth.nu[c] = std::exp(z(rng));
        }
    }
    const double mean_nu = std::accumulate(truth.nu.begin(), truth.nu.end(), 0.0) / cells;
    for (auto& v : truth.nu) v /= mean_nu;

    // Dense gene-major scratch; each cell task owns one column.
    std::vector<count_t> dense(genes * cells, 0);
    parallel_for(cells, threads, [&](std::size_t c) {
        const auto& cl = config.clusters[truth.cluster_of[c]];
        for (std::size_t g = 0; g < genes; ++g) {
            const double lambda = cl.lambda[g];
            if (lambda == 0.0) continue;
            auto rng = keyed_stream(config.seed, c, g);
            double level = lambda;
            if (cl.a[g] > 0.0) {
                const double a = cl.a[g];
                std::gamma_distribution<double> gamma(1.0 / a, a * lambda);
                level = gamma(rng);
            }
            const double mean = truth.nu[c] * level;
            if (!(mean > 0.0)) continue;
            std::poisson_distribution<std::int64_t> pois(mean);
            const auto r = pois(rng);
            if (r > static_cast<std::int64_t>(std::numeric_limits<count_t>::max())) {
                throw NumericError("generated count exceeds the 32-bit range");
            }
            dense[g * cells + c] = static_cast<count_t>(r);
        }
    });

    std::vector<std::size_t> offsets(genes + 1, 0);
    std::vector<index_t> idx;
    std::vector<count_t> counts;
    for (std::size_t g = 0; g < genes; ++g) {
        for (std::size_t c = 0; c < cells; ++c) {
            if (const auto v = dense[g * cells + c]; v != 0) {
                idx.push_back(static_cast<index_t>(c));
                counts.push_back(v);
            }
        }
        offsets[g + 1] = idx.size();
    }
    std::vector<std::string> gene_ids(genes), cell_ids(cells);
    for (std::size_t g = 0; g < genes; ++g) gene_ids[g] = "gene" + std::to_string(g + 1);
    for (std::size_t c = 0; c < cells; ++c) cell_ids[c] = "cell" + std::to_string(c + 1);
    return {CountMatrix(std::move(gene_ids), std::move(cell_ids), std::move(offsets), std::move(idx),
                        std::move(counts)),
            std::move(truth)};
}

double nb_zero_probability(double a, double mu) {
    if (!(a >= 0.0) || !(mu >= 0.0)) throw std::invalid_argument("nb_zero_probability: a, mu >= 0");
    if (a == 0.0) return std::exp(-mu);
    return std::exp(-std::log1p(a * mu) / a);
}

ZeroRateReport zero_rate_check(const GroundTruth& truth, const CountMatrix& m) {
    if (truth.nu.size() != m.n_cells() || truth.lambda.empty() ||
        truth.lambda.front().size() != m.n_genes()) {
        throw std::invalid_argument("ground truth does not match the matrix");
    }
    ZeroRateReport rep;
    const double cells = static_cast<double>(m.n_cells());
    rep.expected.resize(m.n_genes());
    rep.observed.resize(m.n_genes());
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        double e = 0.0;
        for (std::size_t c = 0; c < m.n_cells(); ++c) {
            e += nb_zero_probability(truth.a[truth.cluster_of[c]][g], truth.mu(g, c));
        }
        rep.expected[g] = e / cells;
        rep.observed[g] = (cells - static_cast<double>(m.row(g).size())) / cells;
        rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(rep.expected[g] - rep.observed[g]));
    }
    return rep;
}

FittedConfig fit_cluster_params(const CountMatrix& m, std::span<const std::uint32_t> clusters,
                                const ModelParams& params, std::uint64_t seed, unsigned threads) {
    if (clusters.size() != m.n_cells() || params.nu.size() != m.n_cells() ||
        params.lambda.size() != m.n_genes()) {
        throw std::invalid_argument("fit_cluster_params: inconsistent dimensions");
    }
    std::uint32_t k = 0;
    for (auto j : clusters) k = std::max(k, j + 1);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t c = 0; c < clusters.size(); ++c) members[clusters[c]].push_back(c);

    FittedConfig out;
    out.config.seed = seed;
    out.config.nu.kind = NuLaw::Kind::Explicit;
    const auto cell_totals = marginals(m).cell_totals;
    for (std::uint32_t j = 0; j < k; ++j) {
        const auto& cells = members[j];
        if (cells.empty()) throw InputError("cluster " + std::to_string(j) + " has no cells");
        std::uint64_t total = 0;
        for (auto c : cells) total += cell_totals[c];
        if (total == 0) throw InputError("cluster " + std::to_string(j) + " has only zero counts");

        const auto sub = m.select_cells(cells);
        const auto sub_params = estimate(sub, params.kind, threads);
        const auto fit = fit_dispersion(sub, sub_params, 1e-8, threads);
        // The sub-estimate normalizes ν within the cluster; put λ back on the
        // global ν scale.
        double nu_mean = 0.0;
        for (auto c : cells) nu_mean += params.nu[c];
        nu_mean /= static_cast<double>(cells.size());

        ClusterSpec spec;
        spec.cells = cells.size();
        spec.lambda.resize(m.n_genes());
        spec.a.resize(m.n_genes());
        std::vector<std::uint8_t> floored(m.n_genes(), 0);
        for (std::size_t g = 0; g < m.n_genes(); ++g) {
            spec.lambda[g] = sub_params.lambda[g] / nu_mean;
            spec.a[g] = fit.a[g];
            if (spec.a[g] < 0.0) {
                spec.a[g] = 0.0;
                floored[g] = 1;
            }
        }
        for (auto c : cells) out.config.nu.values.push_back(params.nu[c]);
        out.config.clusters.push_back(std::move(spec));
        out.a_floored.push_back(std::move(floored));
    }
    return out;
}

SynthConfig desk_config(const DeskPreset& p) {
    if (p.genes == 0 || p.cells == 0 || p.clusters == 0 || p.clusters > p.cells) {
        throw std::invalid_argument("desk preset: genes, cells and clusters must be positive");
    }
    if (!(p.lambda_median > 0.0) || !(p.a_median > 0.0) || p.lambda_log_sd < 0.0 ||
        p.a_log_sd < 0.0 || p.de_fraction < 0.0 || p.de_fraction > 1.0 || p.de_log_sd < 0.0) {
        throw std::invalid_argument("desk preset: parameter out of range");
    }
    SynthConfig cfg;
    cfg.seed = p.seed;
    cfg.nu.log_sd = p.nu_log_sd;
    std::vector<double> lambda(p.genes), a(p.genes);
    std::vector<std::uint8_t> de(p.genes, 0);
    for (std::size_t g = 0; g < p.genes; ++g) {
        auto rng = keyed_stream(p.seed, kGeneStream, g);
        std::normal_distribution<double> z(0.0, 1.0);
        lambda[g] = p.lambda_median * std::exp(p.lambda_log_sd * z(rng));
        a[g] = p.a_median * std::exp(p.a_log_sd * z(rng));
        de[g] = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p.de_fraction;
    }
    for (std::size_t j = 0; j < p.clusters; ++j) {
        ClusterSpec spec;
        spec.cells = p.cells / p.clusters + (j < p.cells % p.clusters ? 1 : 0);
        spec.lambda = lambda;
        spec.a = a;
        if (p.clusters > 1) {
            for (std::size_t g = 0; g < p.genes; ++g) {
                if (!de[g]) continue;
                auto rng = keyed_stream(p.seed, kGeneStream + 1 + j, g);
                std::normal_distribution<double> z(0.0, p.de_log_sd);
                spec.lambda[g] *= std::exp(z(rng));
            }
        }
        cfg.clusters.push_back(std::move(spec));
    }
    return cfg;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw InputError("malformed number '" + s + "'", line);
        return v;
    } catch (const std::logic_error&) {
        throw InputError("malformed number '" + s + "'", line);
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void load_params_file(const std::filesystem::path& path, SynthConfig& cfg,
                      const std::vector<double>& sizes) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open params file '" + path.string() + "'");
    std::string line;
    std::size_t lineno = 0;
    struct Row {
        std::size_t cluster, gene;
        double lambda, a;
    };
    std::vector<Row> rows;
    std::size_t k = 0, genes = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("cluster", 0) == 0) continue;
        const auto f = split_csv(line);
        if (f.size() != 4) throw InputError("expected cluster,gene,lambda,a", lineno);
        const double cl = to_double(f[0], lineno), g = to_double(f[1], lineno);
        if (cl < 0 || g < 0 || cl != std::floor(cl) || g != std::floor(g)) {
            throw InputError("cluster and gene must be non-negative integers", lineno);
        }
        rows.push_back({static_cast<std::size_t>(cl), static_cast<std::size_t>(g),
                        to_double(f[2], lineno), to_double(f[3], lineno)});
        k = std::max(k, rows.back().cluster + 1);
        genes = std::max(genes, rows.back().gene + 1);
    }
    if (sizes.size() != k) throw InputError("'cells' must list one size per cluster in params_file");
    cfg.clusters.assign(k, {});
    for (std::size_t j = 0; j < k; ++j) {
        if (sizes[j] < 1 || sizes[j] != std::floor(sizes[j])) throw InputError("bad cluster size");
        cfg.clusters[j].cells = static_cast<std::size_t>(sizes[j]);
        cfg.clusters[j].lambda.assign(genes, -1.0);
        cfg.clusters[j].a.assign(genes, 0.0);
    }
    for (const auto& r : rows) {
        cfg.clusters[r.cluster].lambda[r.gene] = r.lambda;
        cfg.clusters[r.cluster].a[r.gene] = r.a;
    }
    for (const auto& c : cfg.clusters) {
        if (std::find(c.lambda.begin(), c.lambda.end(), -1.0) != c.lambda.end()) {
            throw InputError("params_file does not cover every (cluster, gene)");
        }
    }
}

}  // namespace

SynthConfig synth_config_from(const KeyValueConfig& kv, const std::filesystem::path& base_dir) {
    kv.reject_unknown({"genes", "cells", "clusters", "seed", "nu_log_sd", "nu_file", "lambda_median",
                       "lambda_log_sd", "a_median", "a_log_sd", "de_fraction", "de_log_sd",
                       "params_file"});
    SynthConfig cfg;
    if (const auto params = kv.get("params_file")) {
        for (const char* k : {"genes", "clusters", "lambda_median", "lambda_log_sd", "a_median",
                              "a_log_sd", "de_fraction", "de_log_sd"}) {
            if (kv.has(k)) throw InputError(std::string("'") + k + "' conflicts with params_file");
        }
        load_params_file(resolve(base_dir, *params), cfg, kv.get_doubles("cells"));
        cfg.seed = kv.get_uint("seed", 1);
        cfg.nu.log_sd = kv.get_double("nu_log_sd", 0.4);
    } else {
        DeskPreset p;
        p.genes = kv.get_uint("genes", p.genes);
        p.cells = kv.get_uint("cells", p.cells);
        p.clusters = kv.get_uint("clusters", p.clusters);
        p.seed = kv.get_uint("seed", p.seed);
        p.nu_log_sd = kv.get_double("nu_log_sd", p.nu_log_sd);
        p.lambda_median = kv.get_double("lambda_median", p.lambda_median);
        p.lambda_log_sd = kv.get_double("lambda_log_sd", p.lambda_log_sd);
        p.a_median = kv.get_double("a_median", p.a_median);
        p.a_log_sd = kv.get_double("a_log_sd", p.a_log_sd);
        p.de_fraction = kv.get_double("de_fraction", p.de_fraction);
        p.de_log_sd = kv.get_double("de_log_sd", p.de_log_sd);
        try {
            cfg = desk_config(p);
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
    }
    if (const auto nu_file = kv.get("nu_file")) {
        const auto path = resolve(base_dir, *nu_file);
        std::ifstream in(path);
        if (!in) throw InputError("cannot open nu file '" + path.string() + "'");
        cfg.nu.kind = NuLaw::Kind::Explicit;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            cfg.nu.values.push_back(to_double(line, lineno));
        }
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return cfg;
}

void write_ground_truth(const GroundTruth& truth, const CountMatrix& m,
                        const std::filesystem::path& prefix) {
    auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p);
        if (!out) throw InputError("cannot write '" + p.string() + "'");
        out.precision(17);
        return out;
    };
    auto cells = open(prefix.string() + "_cells.csv");
    cells << "cell,cluster,nu\n";
    for (std::size_t c = 0; c < truth.nu.size(); ++c) {
        cells << m.cell_ids()[c] << ',' << truth.cluster_of[c] << ',' << truth.nu[c] << '\n';
    }
    auto genes = open(prefix.string() + "_genes.csv");
    genes << "gene,cluster,lambda,a\n";
    for (std::size_t j = 0; j < truth.lambda.size(); ++j) {
        for (std::size_t g = 0; g < truth.lambda[j].size(); ++g) {
            genes << m.gene_ids()[g] << ',' << j << ',' << truth.lambda[j][g] << ','
                  << truth.a[j][g] << '\n';
        }
    }
}

}  // namespace sccoex
