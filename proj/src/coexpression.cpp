#include "sccoex/coexpression.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <string>

#include "sccoex/chi2.hpp"
#include "sccoex/parallel.hpp"

namespace sccoex {

namespace {

void check_pair(std::size_t g1, std::size_t g2, std::size_t n) {
    if (g1 >= n || g2 >= n) throw std::out_of_range("gene index out of range");
    if (g1 == g2) throw std::invalid_argument("co-expression of a gene with itself is degenerate");
}

// Entries of two sorted index lists present in both.
std::uint32_t intersection_size(std::span<const index_t> a, std::span<const index_t> b) {
    std::uint32_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

}  // namespace

double expression_mass(std::span<const double> rho_row) {
    double s = 0.0;
    for (double v : rho_row) s += v;
    return s;
}

std::array<double, 4> complete_expected(double e11, double mass1, double mass2, double m) {
    // Rounding can push a mathematically positive cell a hair below zero.
    return {e11, std::max(0.0, mass1 - e11), std::max(0.0, mass2 - e11),
            std::max(0.0, ((m - mass1) - mass2) + e11)};
}

std::array<std::uint32_t, 4> complete_observed(std::uint32_t o11, std::uint32_t nz1,
                                               std::uint32_t nz2, std::uint32_t m) {
    return {o11, nz1 - o11, nz2 - o11, m - nz1 - nz2 + o11};
}

std::array<std::uint32_t, 4> observed_table(const CountMatrix& m, std::size_t g1, std::size_t g2) {
    check_pair(g1, g2, m.n_genes());
    const auto r1 = m.row(g1);
    const auto r2 = m.row(g2);
    return complete_observed(intersection_size(r1.cells, r2.cells),
                             static_cast<std::uint32_t>(r1.size()),
                             static_cast<std::uint32_t>(r2.size()),
                             static_cast<std::uint32_t>(m.n_cells()));
}

std::array<double, 4> expected_table(const RhoMatrix& rho, std::size_t g1, std::size_t g2) {
    check_pair(g1, g2, rho.n_genes());
    const auto a = rho.row(g1);
    const auto b = rho.row(g2);
    const double e11 = kernels::scalar().dot(a.data(), b.data(), a.size());
    return complete_expected(e11, expression_mass(a), expression_mass(b),
                             static_cast<double>(rho.n_cells()));
}

std::array<double, 4> classical_expected(double row1, double row0, double col1, double col0,
                                         double m) {
    if (!(m > 0.0)) return {0.0, 0.0, 0.0, 0.0};
    return {row1 * col1 / m, row1 * col0 / m, row0 * col1 / m, row0 * col0 / m};
}

CoexResult coex_stats(const CoexTable& t) {
    // Sign (-1)^(i+j): + for (1,1) and (0,0), - for the off-diagonal cells.
    constexpr double sign[4] = {1.0, -1.0, -1.0, 1.0};
    double w = 0.0, inv_sum = 0.0, proj = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double denom = std::max(1.0, t.expected[k]);
        const double d = static_cast<double>(t.observed[k]) - t.expected[k];
        w += d * d / denom;
        inv_sum += 1.0 / denom;
        proj += sign[k] * d / denom;
    }
    CoexResult out;
    out.w = w;
    out.r = proj / std::sqrt(inv_sum);
    out.p_value = chi2_survival(w, 1);
    return out;
}

CoexTable coex_table(const CountMatrix& m, const RhoMatrix& rho, std::size_t g1, std::size_t g2) {
    CoexTable t;
    t.observed = observed_table(m, g1, g2);
    t.expected = expected_table(rho, g1, g2);
    t.m = static_cast<std::uint32_t>(m.n_cells());
    return t;
}

ExpressionBits::ExpressionBits(const CountMatrix& m) : words((m.n_cells() + 63) / 64) {
    bits.assign(m.n_genes() * words, 0);
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        auto* row = bits.data() + g * words;
        for (auto c : m.row(g).cells) row[c / 64] |= std::uint64_t{1} << (c % 64);
    }
}

namespace {

void check_aligned(const CountMatrix& m, const RhoMatrix& rho) {
    if (m.n_genes() != rho.n_genes() || m.n_cells() != rho.n_cells()) {
        throw std::invalid_argument("count matrix and rho matrix are not aligned");
    }
}

// Runs work(i) in parallel; a sink failure becomes PairwiseAborted carrying
// the number of pairs the sink had accepted.
template <class Work>
void run_guarded(std::size_t tasks, unsigned threads, std::atomic<std::uint64_t>& emitted,
                 Work&& work) {
    try {
        parallel_for(tasks, threads, work);
    } catch (const std::exception& e) {
        throw PairwiseAborted(std::string("pairwise co-expression aborted: ") + e.what(),
                              emitted.load());
    }
}

}  // namespace

std::uint64_t pairwise_coex(const CountMatrix& m, const RhoMatrix& rho, PairSink& sink,
                            const EngineOptions& options) {
    check_aligned(m, rho);
    if (options.tile == 0) throw std::invalid_argument("tile size must be >= 1");
    const auto& k = options.kernels ? *options.kernels : kernels::best();
    const std::size_t n = m.n_genes();
    const std::size_t cells = m.n_cells();
    const std::size_t tile = options.tile;
    const std::size_t tiles = (n + tile - 1) / tile;

    const ExpressionBits bits(m);
    std::vector<double> mass(n);
    std::vector<std::uint32_t> nonzero(n);
    for (std::size_t g = 0; g < n; ++g) {
        mass[g] = expression_mass(rho.row(g));
        nonzero[g] = static_cast<std::uint32_t>(m.row(g).size());
    }

    // Upper-triangular tiles in row-major order.
    std::vector<std::pair<std::size_t, std::size_t>> work;
    work.reserve(tiles * (tiles + 1) / 2);
    for (std::size_t i = 0; i < tiles; ++i) {
        for (std::size_t j = i; j < tiles; ++j) work.emplace_back(i, j);
    }

    std::atomic<std::uint64_t> emitted{0};
    const double md = static_cast<double>(cells);
    const auto m32 = static_cast<std::uint32_t>(cells);
    run_guarded(work.size(), options.threads, emitted, [&](std::size_t w) {
        const auto [ti, tj] = work[w];
        const std::size_t a0 = ti * tile, a_rows = std::min(tile, n - a0);
        const std::size_t b0 = tj * tile, b_rows = std::min(tile, n - b0);

        thread_local std::vector<std::uint32_t> o11;
        thread_local std::vector<double> e11;
        thread_local std::vector<PairRecord> batch;
        o11.resize(a_rows * b_rows);
        e11.resize(a_rows * b_rows);
        batch.clear();

        k.and_popcount_block({bits.row(a0), a_rows, bits.words},
                             {bits.row(b0), b_rows, bits.words}, bits.words, o11.data());
        k.dot_block({rho.row(a0).data(), a_rows, cells}, {rho.row(b0).data(), b_rows, cells},
                    cells, e11.data());

        for (std::size_t i = 0; i < a_rows; ++i) {
            const std::size_t g1 = a0 + i;
            for (std::size_t j = (ti == tj ? i + 1 : 0); j < b_rows; ++j) {
                const std::size_t g2 = b0 + j;
                PairRecord rec;
                rec.g1 = static_cast<std::uint32_t>(g1);
                rec.g2 = static_cast<std::uint32_t>(g2);
                rec.table.m = m32;
                rec.table.observed =
                    complete_observed(o11[i * b_rows + j], nonzero[g1], nonzero[g2], m32);
                rec.table.expected = complete_expected(e11[i * b_rows + j], mass[g1], mass[g2], md);
                rec.result = coex_stats(rec.table);
                batch.push_back(rec);
            }
        }
        sink.consume(batch, TileInfo{ti, tj, tiles});
        emitted += batch.size();
    });
    return emitted.load();
}

std::uint64_t pairwise_coex_list(const CountMatrix& m, const RhoMatrix& rho,
                                 std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                                 PairSink& sink, const EngineOptions& options) {
    check_aligned(m, rho);
    for (const auto& [a, b] : pairs) check_pair(a, b, m.n_genes());
    constexpr std::size_t chunk = 4096;
    const std::size_t chunks = (pairs.size() + chunk - 1) / chunk;
    std::atomic<std::uint64_t> emitted{0};
    std::vector<std::vector<PairRecord>> done(chunks);
    std::vector<char> ready(chunks, 0);
    std::mutex order_mutex;
    std::size_t next_chunk = 0;
    // Chunks are computed in parallel but handed to the sink in list order.
    run_guarded(chunks, options.threads, emitted, [&](std::size_t c) {
        std::vector<PairRecord> batch;
        const auto end = std::min(pairs.size(), (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) {
            PairRecord rec;
            rec.g1 = pairs[i].first;
            rec.g2 = pairs[i].second;
            rec.table = coex_table(m, rho, rec.g1, rec.g2);
            rec.result = coex_stats(rec.table);
            batch.push_back(rec);
        }
        std::lock_guard lock(order_mutex);
        done[c] = std::move(batch);
        ready[c] = 1;
        while (next_chunk < chunks && ready[next_chunk]) {
            sink.consume(done[next_chunk], TileInfo{next_chunk, next_chunk, chunks});
            emitted += done[next_chunk].size();
            done[next_chunk].clear();
            done[next_chunk].shrink_to_fit();
            ++next_chunk;
        }
    });
    return emitted.load();
}

}  // namespace sccoex
