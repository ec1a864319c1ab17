#pragma once

// Serial reference implementations, independent of the library's index and
// mining code paths. Tests use them as brute-force oracles and the benchmark
// tool compares them against the parallel kernels.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace zpd::ref {

struct RefNeighbor {
    std::string chunk_id;
    double cosine = 0.0;
};

/// O(n^2) cosine scan: for each row, all others sorted by cosine descending,
/// ties by ascending chunk_id, truncated to k.
std::vector<std::vector<RefNeighbor>> knn_serial(const std::vector<std::string>& ids,
                                                 const std::vector<std::vector<double>>& vectors,
                                                 std::size_t k);

using TripleKey = std::array<std::string, 3>;

/// Exhaustive O(n^3) enumeration of triples whose three pairwise cosines all
/// exceed tau. Sorted canonical triples.
std::vector<TripleKey> mine_serial_exhaustive(const std::vector<std::string>& ids,
                                              const std::vector<std::vector<double>>& vectors,
                                              double tau);

/// The exhaustive filter intersected with the neighborhood constraint: some
/// seed's top-k_nn neighbor list must contain the other two members.
std::vector<TripleKey> mine_serial_neighborhood(const std::vector<std::string>& ids,
                                                const std::vector<std::vector<double>>& vectors,
                                                int k_nn, double tau);

/// Naive two-pass means of rounds and per-tool calls (oracle for
/// dataset_stats).
struct RefStats {
    double avg_rounds = 0.0;
    double avg_search = 0.0;
    double avg_scholar = 0.0;
    double avg_browser = 0.0;
    double avg_code = 0.0;
};

struct RefTrajectorySummary {
    int rounds = 0;
    long search = 0, scholar = 0, browser = 0, code = 0;
};

RefStats stats_two_pass(const std::vector<RefTrajectorySummary>& trajectories);

/// Per-row any-prefix scan (oracle for pass_at_n).
std::vector<double> pass_curve_prefix_scan(const std::vector<std::vector<bool>>& matrix);

}  // namespace zpd::ref
