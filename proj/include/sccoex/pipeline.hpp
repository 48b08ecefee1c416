#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sccoex/artifacts.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/keyvalue.hpp"

namespace sccoex {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitInput = 3, kExitNumeric = 4 };

struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path output_dir = "sccoex_out";
    EstimatorKind estimator = EstimatorKind::Average;
    double alpha = 1e-3;
    double gdi_quantile = 1e-4;
    double gdi_floor = -10.0;
    double zero_tolerance = 1e-8;
    std::uint64_t min_total = 1;
    std::size_t tile = 256;
    unsigned threads = 0;
    std::uint64_t seed = 1;
    std::string coex_output = "csv";  ///< csv | binary | none
    bool write_rho = false;

    static const std::set<std::string>& keys();
    /// Relative paths in `kv` resolve against `base_dir`.
    static PipelineConfig from(const KeyValueConfig& kv, const std::filesystem::path& base_dir = {});
    /// Throws InputError on out-of-range settings.
    void validate() const;
};

/// An error inside a pipeline stage; `stage` is e.g. "ingest".
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what, int exit_code)
        : std::runtime_error(stage + "-error: " + what), stage(std::move(stage)), exit_code(exit_code) {}
    std::string stage;
    int exit_code;
};

struct StageReport {
    std::string stage;
    bool cached = false;
};

struct ArtifactEntry {
    std::string name;
    std::string sha256;
    std::uint64_t bytes = 0;
};

struct PipelineResult {
    std::vector<StageReport> stages;
    std::vector<ArtifactEntry> artifacts;
    std::filesystem::path manifest;
};

/// ingest -> estimate -> fit-zero -> coex -> gdi. A stage is skipped
/// ("cached") when the manifest in output_dir records the same stage key
/// (settings plus input hashes) and its outputs still hash as recorded.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

enum class PlotKind { PvalueEcdf, GdiHist, EstimatorScatter };
PlotKind parse_plot_kind(std::string_view name);

struct PlotInputs {
    std::filesystem::path coex;             ///< pvalue-ecdf
    std::filesystem::path gdi;              ///< gdi-hist
    std::filesystem::path truth_prefix;     ///< estimator-scatter: <prefix>_cells.csv, _genes.csv
    std::vector<std::filesystem::path> gene_estimates;  ///< estimator-scatter
    std::vector<std::filesystem::path> cell_estimates;
    std::size_t max_points = 1000000;
    double bin_width = 0.1;
    std::uint64_t seed = 1;
};

/// Tidy `x,y,series` CSV.
void emit_plot_data(PlotKind kind, const PlotInputs& inputs, std::ostream& out);

}  // namespace sccoex
