#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "sccoex/count_matrix.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/keyvalue.hpp"

namespace sccoex {

/// SplitMix64 stream; a UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;
    explicit SplitMix64(std::uint64_t state) : state_(state) {}
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Independent stream for (seed, a, b). Streams with distinct keys do not
/// share state, so draws do not depend on evaluation order.
SplitMix64 keyed_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

struct ClusterSpec {
    std::size_t cells = 0;
    std::vector<double> lambda;  ///< per gene, >= 0
    std::vector<double> a;       ///< per gene, >= 0 (0 = pure Poisson)
};

struct NuLaw {
    enum class Kind { LogNormal, Explicit };
    Kind kind = Kind::LogNormal;
    double log_sd = 0.4;
    std::vector<double> values;  ///< Explicit: one positive value per cell
};

struct SynthConfig {
    std::vector<ClusterSpec> clusters;
    NuLaw nu;
    std::uint64_t seed = 1;

    std::size_t n_genes() const { return clusters.empty() ? 0 : clusters.front().lambda.size(); }
    std::size_t n_cells() const;

    /// Throws std::invalid_argument on inconsistent or out-of-range values.
    void validate() const;
};

struct GroundTruth {
    std::vector<double> nu;                   ///< realized, mean 1
    std::vector<std::vector<double>> lambda;  ///< [cluster][gene]
    std::vector<std::vector<double>> a;       ///< [cluster][gene]
    std::vector<std::uint32_t> cluster_of;    ///< per cell

    double mu(std::size_t gene, std::size_t cell) const {
        return nu[cell] * lambda[cluster_of[cell]][gene];
    }
};

struct Synthetic {
    CountMatrix matrix;
    GroundTruth truth;
};

/// Cells are laid out cluster by cluster. Output is a function of the config
/// only, independent of `threads`.
Synthetic generate(const SynthConfig& config, unsigned threads = 0);

/// Negative-binomial P(R = 0) for dispersion a >= 0 and mean mu.
double nb_zero_probability(double a, double mu);

struct ZeroRateReport {
    std::vector<double> expected;  ///< per gene zero fraction under the truth
    std::vector<double> observed;
    double max_abs_diff = 0.0;
};

ZeroRateReport zero_rate_check(const GroundTruth& truth, const CountMatrix& m);

struct FittedConfig {
    SynthConfig config;
    std::vector<std::vector<std::uint8_t>> a_floored;  ///< [cluster][gene]
};

/// Moment-based stand-in for parameter fitting. `clusters` labels each cell
/// 0..k-1; the returned config lists cells cluster by cluster, with the
/// global ν estimates as explicit values in that order.
FittedConfig fit_cluster_params(const CountMatrix& m, std::span<const std::uint32_t> clusters,
                                const ModelParams& params, std::uint64_t seed = 1,
                                unsigned threads = 1);

/// Desk-scale configuration with random gene parameters drawn from `seed`.
struct DeskPreset {
    std::size_t genes = 2000;
    std::size_t cells = 800;
    std::size_t clusters = 1;
    std::uint64_t seed = 1;
    double nu_log_sd = 0.4;
    double lambda_median = 0.5;
    double lambda_log_sd = 1.3;
    double a_median = 0.5;
    double a_log_sd = 1.0;
    double de_fraction = 0.1;  ///< genes with cluster-specific levels
    double de_log_sd = 2.0;
};

SynthConfig desk_config(const DeskPreset& preset);

/// Simulation config file. Keys: genes, cells, clusters, seed, nu_log_sd,
/// nu_file, lambda_median, lambda_log_sd, a_median, a_log_sd, de_fraction,
/// de_log_sd, params_file. `params_file` is a CSV with header
/// `cluster,gene,lambda,a` (and `cells` then takes a comma-separated list of
/// cluster sizes); `nu_file` holds one efficiency per line.
SynthConfig synth_config_from(const KeyValueConfig& kv, const std::filesystem::path& base_dir = {});

/// Ground-truth CSVs: <prefix>_cells.csv (cell, cluster, nu) and
/// <prefix>_genes.csv (gene, cluster, lambda, a).
void write_ground_truth(const GroundTruth& truth, const CountMatrix& m,
                        const std::filesystem::path& prefix);

}  // namespace sccoex
