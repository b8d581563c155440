#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <set>
#include <vector>

#include "rdfilter/errors.hpp"
#include "rdfilter/lattice.hpp"
#include "rdfilter/rng.hpp"
#include "support/oracles.hpp"

using rdf::Lattice;
using rdf::Site;

namespace {

std::vector<double> random_field(int n, std::uint64_t seed) {
    const rdf::RngStream s(seed, rdf::RngDomain::kInit, 0, 0);
    std::vector<double> f(n);
    for (int i = 0; i < n; ++i) f[i] = s.uniform(i);
    return f;
}

} // namespace

TEST_CASE("flat indexing is row-major and 1-based") {
    const Lattice lat(100, 0.02);
    CHECK(lat.flat_index({1, 1}) == 0);
    CHECK(lat.flat_index({1, 2}) == 1);
    CHECK(lat.flat_index({2, 1}) == 100);
    CHECK(lat.flat_index({100, 100}) == 9999);
    CHECK(lat.n_sites() == 10000);

    for (int flat : {0, 57, 9999}) {
        const Site s = lat.site_at(flat);
        CHECK(lat.flat_index(s) == flat);
    }
}

TEST_CASE("species-major state indexing") {
    const Lattice lat(100, 0.02);
    CHECK(rdf::site_to_flat(lat, {100, 100}, 2, 2) == 19999);
    CHECK(rdf::site_to_flat(lat, {1, 1}, 1, 2) == 0);
    CHECK(rdf::site_to_flat(lat, {1, 1}, 2, 2) == 10000);
    CHECK_THROWS_AS(rdf::site_to_flat(lat, {1, 1}, 3, 2), rdf::UsageError);
    CHECK_THROWS_AS(rdf::site_to_flat(lat, {1, 1}, 0, 2), rdf::UsageError);
}

TEST_CASE("construction and range errors") {
    CHECK_THROWS_AS(Lattice(0, 0.02), rdf::UsageError);
    CHECK_THROWS_AS(Lattice(5, 0.0), rdf::UsageError);
    CHECK_THROWS_AS(Lattice(5, -1.0), rdf::UsageError);

    const Lattice lat(5, 0.1);
    CHECK_THROWS_AS(lat.flat_index({0, 1}), rdf::UsageError);
    CHECK_THROWS_AS(lat.flat_index({1, 6}), rdf::UsageError);
    CHECK_THROWS_AS(lat.site_at(-1), rdf::UsageError);
    CHECK_THROWS_AS(lat.site_at(25), rdf::UsageError);
}

TEST_CASE("neighbourhoods have the right size and order") {
    const Lattice lat(4, 1.0);
    CHECK(lat.neighbors({1, 1}).size() == 2); // corner
    CHECK(lat.neighbors({1, 2}).size() == 3); // edge
    CHECK(lat.neighbors({2, 2}).size() == 4); // interior

    // Neighbours come back in ascending flat order.
    for (int flat = 0; flat < lat.n_sites(); ++flat) {
        const auto nb = lat.neighbors(lat.site_at(flat));
        int prev = -1;
        for (const Site& s : nb) {
            const int f = lat.flat_index(s);
            CHECK(f > prev);
            prev = f;
        }
    }

    // The flat table agrees with the per-site lists: up, left, right, down.
    const auto& tab = lat.neighbor_table();
    const auto& deg = lat.neighbor_counts();
    REQUIRE(tab.size() == 4u * lat.n_sites());
    for (int flat = 0; flat < lat.n_sites(); ++flat) {
        std::multiset<int> from_table;
        int count = 0;
        for (int k = 0; k < 4; ++k) {
            const int j = tab[4 * flat + k];
            if (j >= 0) {
                from_table.insert(j);
                ++count;
            }
        }
        CHECK(count == deg[flat]);
        std::multiset<int> from_sites;
        for (const Site& s : lat.neighbors(lat.site_at(flat)))
            from_sites.insert(lat.flat_index(s));
        CHECK(from_table == from_sites);
    }
}

TEST_CASE("laplacian matches the dense operator") {
    const int side = 5;
    const double h = 0.3;
    const Lattice lat(side, h);
    const auto f = random_field(lat.n_sites(), 11);
    const auto lf = rdf::laplacian(lat, f);

    const Eigen::MatrixXd dense = oracle::dense_laplacian(side, h);
    const Eigen::Map<const Eigen::VectorXd> fv(f.data(), f.size());
    const Eigen::VectorXd want = dense * fv;
    for (int i = 0; i < lat.n_sites(); ++i)
        CHECK(lf[i] == doctest::Approx(want(i)).epsilon(1e-13));
}

TEST_CASE("laplacian annihilates constants exactly") {
    const Lattice lat(8, 0.02);
    const std::vector<double> f(lat.n_sites(), 3.7);
    for (double v : rdf::laplacian(lat, f)) CHECK(v == 0.0);
}

TEST_CASE("laplacian is symmetric under zero-flux boundaries") {
    const Lattice lat(6, 0.5);
    const auto f = random_field(lat.n_sites(), 21);
    const auto g = random_field(lat.n_sites(), 22);
    const auto lf = rdf::laplacian(lat, f);
    const auto lg = rdf::laplacian(lat, g);
    const double a = std::inner_product(f.begin(), f.end(), lg.begin(), 0.0);
    const double b = std::inner_product(g.begin(), g.end(), lf.begin(), 0.0);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("laplacian scales with the inverse squared spacing") {
    const auto f = random_field(16, 31);
    const auto l1 = rdf::laplacian(Lattice(4, 1.0), f);
    const auto l2 = rdf::laplacian(Lattice(4, 2.0), f);
    for (int i = 0; i < 16; ++i) CHECK(l2[i] == doctest::Approx(0.25 * l1[i]).epsilon(1e-14));
}

TEST_CASE("block partition tiles the lattice") {
    const Lattice lat(100, 0.02);
    const rdf::BlockPartition part = rdf::make_partition(lat, 5);
    CHECK(part.n_blocks() == 400);
    CHECK(part.block_side == 5);

    std::vector<int> seen(lat.n_sites(), 0);
    for (const auto& block : part.blocks) {
        CHECK(block.size() == 25u);
        int prev = -1;
        for (std::int32_t v : block) {
            CHECK(v > prev); // ascending flat order inside the block
            prev = v;
            ++seen[v];
        }
    }
    for (int v = 0; v < lat.n_sites(); ++v) CHECK(seen[v] == 1);

    // First block is the top-left 5x5 square.
    for (std::int32_t v : part.blocks[0]) {
        const Site s = lat.site_at(v);
        CHECK(s.v1 <= 5);
        CHECK(s.v2 <= 5);
    }
}

TEST_CASE("degenerate partitions") {
    const Lattice lat(6, 1.0);
    const auto singles = rdf::make_partition(lat, 1);
    CHECK(singles.n_blocks() == 36);
    for (int v = 0; v < 36; ++v) {
        REQUIRE(singles.blocks[v].size() == 1u);
        CHECK(singles.blocks[v][0] == v);
    }

    const auto whole = rdf::make_partition(lat, 6);
    REQUIRE(whole.n_blocks() == 1);
    CHECK(whole.blocks[0].size() == 36u);

    const auto single = rdf::BlockPartition::single_block(36);
    CHECK(single.blocks == whole.blocks);

    CHECK_THROWS_AS(rdf::make_partition(lat, 4), rdf::UsageError); // 6 % 4 != 0
    CHECK_THROWS_AS(rdf::make_partition(lat, 0), rdf::UsageError);
    CHECK_THROWS_AS(rdf::make_partition(lat, 7), rdf::UsageError);
}
