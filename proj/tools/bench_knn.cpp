// Benchmark: OpenMP-parallel k-NN batch query and composite-unit mining
// against the serial reference implementations, verifying agreement.

#include "zpd/corpus.hpp"
#include "zpd/mock_providers.hpp"

#include "../tests/support/reference.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 2000;
    int k = argc > 2 ? std::atoi(argv[2]) : 10;
    double tau = argc > 3 ? std::atof(argv[3]) : 0.6;

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    std::printf("corpus: %zu chunks, k=%d, tau=%.2f\n", n, k, tau);

    zpd::MockEmbedding embedder(64, 42);
    std::vector<zpd::Chunk> chunks;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> vectors;
    for (std::size_t i = 0; i < n; ++i) {
        // Clustered texts so mining has work to do.
        std::string text = "topic " + std::to_string(i % (n / 20 + 1)) + " variant " +
                           std::to_string(i) + " shared corpus vocabulary";
        zpd::Chunk c{"c" + std::to_string(i), "d" + std::to_string(i / 10), text, std::nullopt};
        c.embedding = embedder.embed_one(text);
        ids.push_back(c.chunk_id);
        vectors.push_back(*c.embedding);
        chunks.push_back(std::move(c));
    }

    auto index = zpd::VectorIndex::build(chunks);

    auto t0 = Clock::now();
    auto parallel_nn = index.all_nearest_neighbors(static_cast<std::size_t>(k));
    double parallel_nn_ms = ms_since(t0);

    t0 = Clock::now();
    auto serial_nn = zpd::ref::knn_serial(ids, vectors, static_cast<std::size_t>(k));
    double serial_nn_ms = ms_since(t0);

    bool nn_match = parallel_nn.size() == serial_nn.size();
    for (std::size_t i = 0; nn_match && i < parallel_nn.size(); ++i) {
        nn_match = parallel_nn[i].size() == serial_nn[i].size();
        for (std::size_t j = 0; nn_match && j < parallel_nn[i].size(); ++j)
            nn_match = parallel_nn[i][j].chunk_id == serial_nn[i][j].chunk_id &&
                       parallel_nn[i][j].cosine == serial_nn[i][j].cosine;
    }

    zpd::IndexConfig cfg{k, tau};
    t0 = Clock::now();
    auto parallel_units = zpd::mine_composite_units(index, cfg);
    double parallel_mine_ms = ms_since(t0);

    t0 = Clock::now();
    auto serial_units = zpd::ref::mine_serial_neighborhood(ids, vectors, k, tau);
    double serial_mine_ms = ms_since(t0);

    bool mine_match = parallel_units.size() == serial_units.size();
    for (std::size_t i = 0; mine_match && i < parallel_units.size(); ++i)
        mine_match = parallel_units[i].chunk_ids == serial_units[i];

    std::printf("\n%-28s %12s %12s %9s\n", "kernel", "parallel ms", "serial ms", "speedup");
    std::printf("%-28s %12.1f %12.1f %8.2fx\n", "knn batch query", parallel_nn_ms, serial_nn_ms,
                serial_nn_ms / parallel_nn_ms);
    std::printf("%-28s %12.1f %12.1f %8.2fx\n", "composite-unit mining", parallel_mine_ms,
                serial_mine_ms, serial_mine_ms / parallel_mine_ms);
    std::printf("\nunits mined: %zu\n", parallel_units.size());
    std::printf("agreement: knn %s, mining %s\n", nn_match ? "OK" : "MISMATCH",
                mine_match ? "OK" : "MISMATCH");
    return (nn_match && mine_match) ? 0 : 1;
}
