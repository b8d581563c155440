#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rdfilter/errors.hpp"
#include "rdfilter/lattice.hpp"
#include "rdfilter/reaction.hpp"
#include "rdfilter/rng.hpp"
#include "support/oracles.hpp"

using rdf::OregonatorParams;
using rdf::ReactionNetwork;

namespace {

ReactionNetwork three_species_net() {
    // X + Y -> 2 X (autocatalysis), 2 X -> Z, Z -> Y, plus a zeroth-order
    // source 0 -> Y keeping the 0^0 = 1 convention honest.
    ReactionNetwork net;
    net.species = {"X", "Y", "Z"};
    net.reactant_stoich = {{1, 1, 0}, {2, 0, 0}, {0, 0, 1}, {0, 0, 0}};
    net.product_stoich = {{2, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 0}};
    net.rates = {1.5, 0.25, 3.0, 0.125};
    return net;
}

} // namespace

TEST_CASE("pointwise reaction terms") {
    const OregonatorParams p; // defaults
    double f1 = 0.0, f2 = 0.0;
    rdf::oregonator_reaction(p, 0.2, 0.3, f1, f2);
    // Same law written out independently.
    const double want1 =
        (0.2 * (1.0 - 0.2) - 0.95 * 0.3 * (0.2 - 0.0075) / (0.2 + 0.0075)) / 0.08;
    CHECK(f1 == doctest::Approx(want1).epsilon(1e-14));
    CHECK(f2 == doctest::Approx(-0.1).epsilon(1e-14));

    rdf::oregonator_reaction(p, 1.0, 0.0, f1, f2);
    CHECK(f1 == doctest::Approx(0.0));
    CHECK(f2 == doctest::Approx(1.0));

    CHECK_THROWS_AS(rdf::oregonator_reaction(p, -p.q, 0.5, f1, f2), rdf::NumericalError);
}

TEST_CASE("parameter validation") {
    OregonatorParams p;
    p.epsilon = 0.0;
    CHECK_THROWS_AS(rdf::validate(p), rdf::UsageError);
    p = OregonatorParams{};
    p.q = 0.0;
    CHECK_THROWS_AS(rdf::validate(p), rdf::UsageError);
    p = OregonatorParams{};
    p.d1 = -1e-9;
    CHECK_THROWS_AS(rdf::validate(p), rdf::UsageError);
    CHECK_NOTHROW(rdf::validate(OregonatorParams{}));
}

TEST_CASE("steady state solves the reduced quadratic and kills the drift") {
    const OregonatorParams p;
    const auto [z1, z2] = rdf::oregonator_steady_state(p);
    CHECK(z1 == z2);
    CHECK(z1 > 0.0);

    // Quadratic residual of z^2 - (1 - sigma - q) z - q (1 + sigma).
    const double b = 1.0 - p.sigma - p.q;
    const double c = p.q * (1.0 + p.sigma);
    CHECK(std::abs(z1 * z1 - b * z1 - c) < 1e-16);
    CHECK(z1 == doctest::Approx(0.14403665440511035).epsilon(1e-13));

    double f1 = 0.0, f2 = 0.0;
    rdf::oregonator_reaction(p, z1, z2, f1, f2);
    CHECK(std::abs(f1) <= 1e-12);
    CHECK(std::abs(f2) <= 1e-10);
    CHECK(f2 == 0.0); // z1 == z2 makes the inhibitor drift vanish identically
}

TEST_CASE("steady state for non-default parameters") {
    OregonatorParams p;
    p.epsilon = 0.1;
    p.sigma = 0.5;
    p.q = 0.01;
    const auto [z1, z2] = rdf::oregonator_steady_state(p);
    const double b = 1.0 - p.sigma - p.q;
    const double c = p.q * (1.0 + p.sigma);
    CHECK(std::abs(z1 * z1 - b * z1 - c) < 1e-15);
    double f1 = 0.0, f2 = 0.0;
    rdf::oregonator_reaction(p, z1, z2, f1, f2);
    CHECK(std::abs(f1) <= 1e-12);
    CHECK(std::abs(f2) <= 1e-10);
}

TEST_CASE("mass-action rates match the brute-force oracle") {
    const ReactionNetwork net = three_species_net();
    net.validate();
    const rdf::RngStream s(77, rdf::RngDomain::kInit, 0, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(3);
        for (int i = 0; i < 3; ++i) z[i] = 2.0 * s.uniform(3 * trial + i);
        const auto got = rdf::mass_action_rates(net, z);
        const auto want = oracle::brute_force_rates(net, z);
        REQUIRE(got.size() == want.size());
        for (std::size_t r = 0; r < got.size(); ++r)
            CHECK(got[r] == doctest::Approx(want[r]).epsilon(1e-14));

        const auto drift = rdf::stoichiometric_drift(net, z);
        const auto drift_want = oracle::brute_force_drift_network(net, z);
        for (std::size_t i = 0; i < drift.size(); ++i)
            CHECK(drift[i] == doctest::Approx(drift_want[i]).epsilon(1e-13));
    }
}

TEST_CASE("zeroth-order reactions fire at zero concentration") {
    const ReactionNetwork net = three_species_net();
    const std::vector<double> z = {0.0, 0.0, 0.0};
    const auto nu = rdf::mass_action_rates(net, z);
    CHECK(nu[0] == 0.0);
    CHECK(nu[1] == 0.0);
    CHECK(nu[2] == 0.0);
    CHECK(nu[3] == 0.125); // the source is independent of the state
}

TEST_CASE("negative concentrations name the offending species") {
    const ReactionNetwork net = three_species_net();
    const std::vector<double> z = {0.1, -0.2, 0.3};
    CHECK_THROWS_WITH_AS(static_cast<void>(rdf::mass_action_rates(net, z)),
                         doctest::Contains("'Y'"), rdf::UsageError);
}

TEST_CASE("conserved cycles have zero net drift") {
    ReactionNetwork net;
    net.species = {"A", "B"};
    net.reactant_stoich = {{1, 0}, {0, 1}};
    net.product_stoich = {{0, 1}, {1, 0}};
    net.rates = {2.0, 2.0};
    const std::vector<double> z = {0.4, 0.4};
    const auto f = rdf::stoichiometric_drift(net, z);
    CHECK(f[0] == doctest::Approx(0.0));
    CHECK(f[1] == doctest::Approx(0.0));
    // Total mass is conserved reaction by reaction.
    CHECK(f[0] + f[1] == doctest::Approx(0.0));
}

TEST_CASE("network text round trip") {
    const std::string text = "# tiny test network\n"
                             "species X Y Z\n"
                             "reaction 1.5 : X + Y -> 2 X\n"
                             "reaction 0.25 : 2 X -> Z\n"
                             "reaction 3 : Z -> Y\n"
                             "reaction 0.125 : -> Y\n";
    const ReactionNetwork net = rdf::parse_network(text);
    const ReactionNetwork want = three_species_net();
    CHECK(net.species == want.species);
    CHECK(net.reactant_stoich == want.reactant_stoich);
    CHECK(net.product_stoich == want.product_stoich);
    CHECK(net.rates == want.rates);

    // Serialization is canonical: parse(serialize(net)) == net and the text
    // form is a fixed point.
    const std::string canon = rdf::serialize_network(net);
    const ReactionNetwork again = rdf::parse_network(canon);
    CHECK(again.species == net.species);
    CHECK(again.reactant_stoich == net.reactant_stoich);
    CHECK(again.product_stoich == net.product_stoich);
    CHECK(again.rates == net.rates);
    CHECK(rdf::serialize_network(again) == canon);
}

TEST_CASE("network file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "rdf_test_network.txt";
    const ReactionNetwork net = three_species_net();
    rdf::save_network(net, path.string());
    const ReactionNetwork loaded = rdf::load_network(path.string());
    CHECK(loaded.species == net.species);
    CHECK(loaded.reactant_stoich == net.reactant_stoich);
    CHECK(loaded.product_stoich == net.product_stoich);
    CHECK(loaded.rates == net.rates);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(rdf::load_network("/nonexistent/net.txt"), rdf::UsageError);
}

TEST_CASE("parse errors carry line numbers") {
    CHECK_THROWS_WITH_AS(rdf::parse_network("species A\nreaction 1 : A -> B\n"),
                         doctest::Contains("line 2"), rdf::UsageError);
    CHECK_THROWS_WITH_AS(rdf::parse_network("reaction 1 : A -> B\n"),
                         doctest::Contains("line 1"), rdf::UsageError);
    CHECK_THROWS_AS(rdf::parse_network("species A\nreaction -2 : A -> A\n"), rdf::UsageError);
    CHECK_THROWS_AS(rdf::parse_network("species A\nreaction 1 : A + -> A\n"), rdf::UsageError);
    CHECK_THROWS_AS(rdf::parse_network("species A\nreaction 1 : 2 -> A\n"), rdf::UsageError);
    CHECK_THROWS_AS(rdf::parse_network("species A\nbogus\n"), rdf::UsageError);
    CHECK_THROWS_AS(rdf::parse_network(""), rdf::UsageError);
    CHECK_THROWS_AS(rdf::parse_network("species A A\n"), rdf::UsageError);
}

TEST_CASE("full drift matches the site-by-site oracle") {
    const OregonatorParams p;
    const int side = 3;
    const double h = 0.02;
    const int n = side * side;
    const rdf::RngStream s(5, rdf::RngDomain::kInit, 0, 0);
    std::vector<double> z1(n), z2(n), lap1(n), lap2(n), f1(n), f2(n);
    for (int i = 0; i < n; ++i) {
        z1[i] = 0.05 + 0.5 * s.uniform(2 * i);
        z2[i] = 0.05 + 0.5 * s.uniform(2 * i + 1);
    }
    const rdf::Lattice lat(side, h);
    rdf::laplacian(lat, z1, lap1);
    rdf::laplacian(lat, z2, lap2);
    rdf::oregonator_drift(p, z1, z2, lap1, lap2, f1, f2);

    std::vector<double> w1(n), w2(n);
    oracle::brute_force_drift(p, side, h, z1, z2, w1, w2);
    for (int i = 0; i < n; ++i) {
        CHECK(f1[i] == doctest::Approx(w1[i]).epsilon(1e-13));
        CHECK(f2[i] == doctest::Approx(w2[i]).epsilon(1e-13));
    }
}
