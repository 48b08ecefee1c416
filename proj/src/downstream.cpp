#include "sccoex/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <unordered_map>

#include "sccoex/chi2.hpp"
#include "sccoex/error.hpp"

namespace sccoex {

void ConditionPartition::validate(std::size_t n_cells) const {
    if (assignment.size() != n_cells) {
        throw InputError("partition covers " + std::to_string(assignment.size()) +
                         " cells, matrix has " + std::to_string(n_cells));
    }
    if (k() < 2) throw InputError("partition needs at least 2 conditions");
    std::vector<std::size_t> sizes(k(), 0);
    for (auto j : assignment) {
        if (j >= k()) throw InputError("condition index out of range");
        ++sizes[j];
    }
    for (std::size_t j = 0; j < k(); ++j) {
        if (sizes[j] == 0) throw InputError("condition '" + labels[j] + "' has no cells");
    }
}

ConditionPartition load_partition(const std::filesystem::path& path, const CountMatrix& m) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::unordered_map<std::string, std::size_t> cell_index;
    for (std::size_t c = 0; c < m.n_cells(); ++c) cell_index.emplace(m.cell_ids()[c], c);

    ConditionPartition part;
    std::unordered_map<std::string, std::uint32_t> label_index;
    constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
    part.assignment.assign(m.n_cells(), unset);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw InputError("expected 'cell<TAB>condition'", lineno);
        }
        const auto cell = line.substr(0, tab);
        const auto label = line.substr(tab + 1);
        const auto it = cell_index.find(cell);
        if (it == cell_index.end()) {
            // Tolerate a header row naming the columns.
            if (lineno == 1) continue;
            throw InputError("unknown cell '" + cell + "'", lineno);
        }
        if (part.assignment[it->second] != unset) {
            throw InputError("cell '" + cell + "' listed twice", lineno);
        }
        auto [lit, inserted] =
            label_index.emplace(label, static_cast<std::uint32_t>(part.labels.size()));
        if (inserted) part.labels.push_back(label);
        part.assignment[it->second] = lit->second;
    }
    for (std::size_t c = 0; c < m.n_cells(); ++c) {
        if (part.assignment[c] == unset) {
            throw InputError("cell '" + m.cell_ids()[c] + "' has no condition");
        }
    }
    part.validate(m.n_cells());
    return part;
}

DiffExpResult diff_expression(const CountMatrix& m, const RhoMatrix& rho,
                              const ConditionPartition& part, std::size_t gene) {
    part.validate(m.n_cells());
    if (gene >= m.n_genes() || rho.n_genes() != m.n_genes() || rho.n_cells() != m.n_cells()) {
        throw std::invalid_argument("diff_expression: gene or matrix shapes invalid");
    }
    const auto k = part.k();
    DiffExpResult out;
    out.observed_nonzero.assign(k, 0);
    out.observed_zero.assign(k, 0);
    out.expected_nonzero.assign(k, 0.0);
    out.expected_zero.assign(k, 0.0);
    std::vector<std::uint32_t> sizes(k, 0);
    for (auto j : part.assignment) ++sizes[j];
    for (auto c : m.row(gene).cells) ++out.observed_nonzero[part.assignment[c]];
    const auto row = rho.row(gene);
    for (std::size_t c = 0; c < row.size(); ++c) out.expected_nonzero[part.assignment[c]] += row[c];

    double w = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        out.observed_zero[j] = sizes[j] - out.observed_nonzero[j];
        out.expected_zero[j] = std::max(0.0, sizes[j] - out.expected_nonzero[j]);
        const double d1 = out.observed_nonzero[j] - out.expected_nonzero[j];
        const double d0 = out.observed_zero[j] - out.expected_zero[j];
        w += d1 * d1 / std::max(1.0, out.expected_nonzero[j]);
        w += d0 * d0 / std::max(1.0, out.expected_zero[j]);
    }
    out.w = w;
    out.dof = static_cast<int>(k) - 1;
    out.p_value = chi2_survival(w, out.dof);
    return out;
}

// GDI ---------------------------------------------------------------------------

double gdi_from_s(double s, double floor) {
    if (!(s >= 0.0)) throw std::invalid_argument("gdi_from_s: s must be >= 0");
    if (s == 0.0) return floor;
    return std::log(-chi2_log_survival(s, 1));
}

std::size_t percentile_rank(double alpha, std::size_t count) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (count == 0) return 0;
    // Guard against (1 - alpha) * count landing a rounding error above an integer.
    const double x = (1.0 - alpha) * static_cast<double>(count);
    auto rank = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    return std::clamp<std::size_t>(rank, 1, count);
}

GdiAccumulator::GdiAccumulator(std::size_t n_genes, GdiOptions options)
    : n_genes_(n_genes),
      options_(options),
      keep_(n_genes >= 2 ? (n_genes - 1) - percentile_rank(options.alpha, n_genes - 1) + 1 : 0),
      heaps_(n_genes),
      seen_(n_genes, 0),
      locks_(kShards) {
    for (auto& h : heaps_) h.reserve(keep_);
}

void GdiAccumulator::push(std::uint32_t gene, double r2) {
    std::lock_guard lock(locks_[gene % kShards]);
    ++seen_[gene];
    auto& h = heaps_[gene];
    if (h.size() < keep_) {
        h.push_back(r2);
        std::push_heap(h.begin(), h.end(), std::greater<>{});
    } else if (keep_ > 0 && r2 > h.front()) {
        std::pop_heap(h.begin(), h.end(), std::greater<>{});
        h.back() = r2;
        std::push_heap(h.begin(), h.end(), std::greater<>{});
    }
}

void GdiAccumulator::add(std::uint32_t g1, std::uint32_t g2, double r) {
    if (g1 >= n_genes_ || g2 >= n_genes_ || g1 == g2) {
        throw std::invalid_argument("GdiAccumulator: invalid gene pair");
    }
    const double r2 = r * r;
    push(g1, r2);
    push(g2, r2);
}

void GdiAccumulator::consume(std::span<const PairRecord> batch, const TileInfo&) {
    for (const auto& rec : batch) add(rec.g1, rec.g2, rec.result.r);
}

GdiScores GdiAccumulator::finalize() const {
    GdiScores out;
    out.s.assign(n_genes_, 0.0);
    out.gdi.assign(n_genes_, options_.floor);
    for (std::size_t g = 0; g < n_genes_; ++g) {
        if (seen_[g] != n_genes_ - 1) {
            throw InputError("incomplete pair stream: gene " + std::to_string(g) + " has " +
                             std::to_string(seen_[g]) + " of " + std::to_string(n_genes_ - 1) +
                             " pairs");
        }
        if (!heaps_[g].empty()) out.s[g] = heaps_[g].front();
        out.gdi[g] = gdi_from_s(out.s[g], options_.floor);
    }
    return out;
}

GdiScores gdi_scores(std::span<const GeneR> results, std::size_t n_genes, GdiOptions options) {
    GdiAccumulator acc(n_genes, options);
    for (const auto& x : results) acc.add(x.g1, x.g2, x.r);
    return acc.finalize();
}

std::vector<std::uint8_t> gdi_threshold_test(const GdiScores& scores, double quantile) {
    const double threshold = chi2_upper_quantile(quantile, 1);
    std::vector<std::uint8_t> flags(scores.s.size());
    for (std::size_t g = 0; g < flags.size(); ++g) flags[g] = scores.s[g] > threshold ? 1 : 0;
    return flags;
}

}  // namespace sccoex
