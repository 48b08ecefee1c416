#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "sccoex/coexpression.hpp"
#include "sccoex/count_matrix.hpp"
#include "sccoex/downstream.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/zero_model.hpp"

namespace sccoex {

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, std::size_t line);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_string(const std::string& data);

// Estimate CSVs: a `# estimator: <kind>` line, then `id,value,flag`.
void write_estimates(const ModelParams& p, const CountMatrix& m,
                     const std::filesystem::path& genes_csv, const std::filesystem::path& cells_csv);
ModelParams read_estimates(const CountMatrix& m, const std::filesystem::path& genes_csv,
                           const std::filesystem::path& cells_csv);

// Dispersion CSV: `# mu_source: <kind>` line, then gene,a,residual,negative_a,fitted.
void write_dispersion(const DispersionFit& fit, const CountMatrix& m,
                      const std::filesystem::path& path);
DispersionFit read_dispersion(const CountMatrix& m, const std::filesystem::path& path);

// GDI CSV: gene,S,GDI,flagged.
void write_gdi(const GdiScores& scores, std::span<const std::uint8_t> flags, const CountMatrix& m,
               const std::filesystem::path& path);
struct GdiTable {
    std::vector<std::string> genes;
    std::vector<double> s, gdi;
    std::vector<std::uint8_t> flagged;
};
GdiTable read_gdi(const std::filesystem::path& path);

enum class CoexFormat { Csv, Binary };
CoexFormat parse_coex_format(std::string_view name);

/// Writes pair records in (g1, g2) order whatever order the engine delivers
/// them in. All-pairs batches are held per tile row until the row is
/// complete; list batches are written as they come. Output goes to
/// `<path>.partial` and is renamed by finish(); abort() leaves the partial
/// file with a trailing marker.
class CoexWriter : public PairSink {
public:
    CoexWriter(const std::filesystem::path& path, CoexFormat format, const CountMatrix& m,
               bool all_pairs);
    void consume(std::span<const PairRecord> batch, const TileInfo& tile) override;
    void finish();
    void abort(std::uint64_t pairs_emitted, const std::string& reason);
    std::uint64_t written() const noexcept { return written_; }

private:
    void write_records(std::span<const PairRecord> recs);
    void flush_ready();

    std::filesystem::path path_, partial_;
    CoexFormat format_;
    const CountMatrix& m_;
    bool all_pairs_;
    std::ofstream out_;
    std::mutex mutex_;
    std::vector<std::vector<PairRecord>> band_;
    std::vector<std::size_t> band_tiles_;
    std::size_t next_band_ = 0;
    std::uint64_t written_ = 0;
    std::streampos count_pos_{};
};

/// Fan-out to several sinks.
class TeeSink : public PairSink {
public:
    explicit TeeSink(std::vector<PairSink*> sinks) : sinks_(std::move(sinks)) {}
    void consume(std::span<const PairRecord> batch, const TileInfo& tile) override {
        for (auto* s : sinks_) s->consume(batch, tile);
    }

private:
    std::vector<PairSink*> sinks_;
};

/// Reads (g1, g2, R, p) columns back from a coex CSV or binary file. Gene
/// names are mapped to indices of `m`.
struct CoexColumns {
    std::vector<GeneR> r;
    std::vector<double> p;
};
/// With `m` null only the p column is read.
CoexColumns read_coex(const std::filesystem::path& path, const CountMatrix* m);

/// Two-column gene pair list (names or 1-based indices), tab or comma separated.
std::vector<std::pair<std::uint32_t, std::uint32_t>> load_pair_list(
    const std::filesystem::path& path, const CountMatrix& m);

}  // namespace sccoex
