#include "kernest/core.hpp"
#include "kernest/rng.hpp"
#include "kernest/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace kernest;

namespace {

CumulativeKernel constant(const Grid& g, double c) {
    return CumulativeKernel(g, c, std::vector<double>(g.cells(), 0.0));
}

CumulativeKernel identity(const Grid& g) {
    return CumulativeKernel(g, 0.0, std::vector<double>(g.cells(), g.spacing()));
}

} // namespace

TEST_CASE("grid nodes and spacing") {
    const Grid g(2.0, 8);
    CHECK(g.num_nodes() == 9);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(8) == 2.0);
    CHECK(g.spacing() == doctest::Approx(0.25));
    const auto x = g.nodes();
    for (std::size_t j = 1; j < x.size(); ++j) {
        CHECK(x[j] > x[j - 1]);
        CHECK(std::abs((x[j] - x[j - 1]) - g.spacing()) <= 1e-12 * g.spacing());
    }
    CHECK(g.cell_of(0.3) == 1);
    CHECK(g.cell_of(2.0) == 7);
    CHECK(g.last_node_at_or_below(0.5) == 2);
    CHECK(g.last_node_at_or_below(0.49) == 1);
}

TEST_CASE("grid rejects bad specs") {
    CHECK_THROWS_AS(Grid(0.0, 10), SpecError);
    CHECK_THROWS_AS(Grid(1.0, 1), SpecError);
}

TEST_CASE("kernel invariants") {
    const Grid g(1.0, 4);
    CHECK_THROWS_AS(CumulativeKernel(g, -0.1, {0, 0, 0, 0}), InputError);
    CHECK_THROWS_AS(CumulativeKernel(g, 0.0, {0, -1e-3, 0, 0}), InputError);
    CHECK_THROWS_AS(CumulativeKernel(g, 0.0, {0, 0, 0}), InputError);
    CHECK_THROWS_AS(CumulativeKernel(g, 0.0, {0, NAN, 0, 0}), InputError);
    const CumulativeKernel k(g, 0.5, {0.1, 0.2, 0.0, 0.3});
    const auto v = k.node_values();
    CHECK(v == std::vector<double>{0.5, 0.6, 0.8, 0.8, 1.1});
    CHECK(k.total_mass() == doctest::Approx(0.6));
    CHECK(k.sup_value() == doctest::Approx(1.1));
    CHECK(k.value_at(0.125) == doctest::Approx(0.55));
}

TEST_CASE("put price closed forms") {
    const Grid g(1.0, 400);
    CHECK(price_put(constant(g, 1.0), 0.5) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(price_put(identity(g), 0.0) == 0.0);
    CHECK(price_put(identity(g), 1.0) == doctest::Approx(0.5).epsilon(1e-14));
    // Off-node strikes: the piecewise-linear interpolant of x is x itself.
    for (double k : {0.0013, 0.31415, 0.777, 0.99999}) {
        CHECK(price_put(identity(g), k) == doctest::Approx(k * k / 2).epsilon(1e-12));
    }
    CHECK_THROWS_AS(price_put(identity(g), -0.01), DomainError);
    CHECK_THROWS_AS(price_put(identity(g), 1.01), DomainError);
}

TEST_CASE("put pricing row is the linear map") {
    const Grid g(1.0, 50);
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_feasible_kernel(g, rng);
        const double k = rng.uniform();
        const auto row = put_pricing_row(g, k);
        REQUIRE(row.size() == g.cells() + 1);
        double s = row[0] * p.base();
        for (std::size_t j = 0; j < g.cells(); ++j) s += row[j + 1] * p.increments()[j];
        CHECK(s == doctest::Approx(price_put(p, k)).epsilon(1e-12));
    }
}

TEST_CASE("payoff pricing") {
    const Grid fine(1.0, 1000);
    Rng rng(5);
    SUBCASE("put payoff matches put price at node strikes") {
        for (int t = 0; t < 20; ++t) {
            const auto p = random_feasible_kernel(fine, rng);
            const double k = fine.node(1 + rng.next_u64() % 998);
            CHECK(std::abs(price_payoff(p, put_payoff(fine, k)) - price_put(p, k)) <= 1e-8);
        }
    }
    SUBCASE("zero payoff") {
        Payoff f{fine, std::vector<double>(fine.num_nodes(), 0.0), 0.0, 1.0, 0.0};
        CHECK(price_payoff(identity(fine), f) == 0.0);
    }
    SUBCASE("digital payoff picks P at the jump") {
        const Grid g(1.0, 400);
        const double v = price_payoff(identity(g), digital_payoff(g, 0.6));
        CHECK(std::abs(v - 0.6) <= g.spacing());
    }
    SUBCASE("grid mismatch") {
        const Grid g(1.0, 400);
        CHECK_THROWS_AS(price_payoff(identity(g), put_payoff(fine, 0.5)), ShapeError);
    }
}

TEST_CASE("distances") {
    const Grid g(1.0, 400);
    const auto one = constant(g, 1.0);
    const auto zero = CumulativeKernel::zero(g);
    const auto x = identity(g);
    CHECK(sup_distance(x, x) == 0.0);
    CHECK(l2_distance(x, x) == 0.0);
    CHECK(sup_distance(one, zero) == doctest::Approx(1.0));
    CHECK(l2_distance(one, zero) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sup_distance(x, zero) == doctest::Approx(1.0));
    // Trapezoid of x^2 on M = 400 overshoots 1/3 by dx^2 / 6.
    CHECK(l2_distance(x, zero) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-5));
    CHECK(sup_distance(x, zero, 0.25) == doctest::Approx(0.25));
    CHECK_THROWS_AS(sup_distance(x, identity(Grid(1.0, 10))), ShapeError);
}

TEST_CASE("payoff family validation") {
    const Grid g(1.0, 400);
    SUBCASE("puts") {
        std::vector<Payoff> puts{put_payoff(g, 0.2), put_payoff(g, 0.5), put_payoff(g, 0.8)};
        const auto r = validate_payoff_family(puts);
        CHECK(r.passed());
        CHECK(r.worst_lipschitz_ratio <= 1.0 + 1e-12);
        CHECK(r.max_variation <= 0.8 + 1e-12);
    }
    SUBCASE("single payoff") {
        std::vector<Payoff> one{put_payoff(g, 0.4)};
        const auto r = validate_payoff_family(one);
        CHECK(r.passed());
        CHECK(r.pairs_checked == 0);
    }
    SUBCASE("scaled puts violate a declared constant of 1") {
        std::vector<Payoff> scaled{scaled_put_payoff(g, 0.2, 2.0, 1.0), scaled_put_payoff(g, 0.6, 2.0, 1.0)};
        const auto r = validate_payoff_family(scaled);
        CHECK_FALSE(r.lipschitz_ok);
        CHECK(r.worst_lipschitz_ratio == doctest::Approx(2.0));
    }
}

TEST_CASE("payoff invariants") {
    const Grid g(1.0, 10);
    Payoff bad{g, std::vector<double>(g.num_nodes(), 1.0), 0.0, 1.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), InputError);
    auto put = put_payoff(g, 0.5);
    put.variation_bound = 0.1;
    CHECK_THROWS_AS(put.validate(), InputError);
    CHECK(total_variation(put_payoff(g, 0.5)) == doctest::Approx(0.5));
}

TEST_CASE("quote set validation") {
    QuoteSet q;
    CHECK_THROWS_AS(q.validate(), InputError);
    q.strikes = {0.2, 0.5};
    q.prices = {0.01};
    q.strike_bound = 1.0;
    CHECK_THROWS_AS(q.validate(), InputError);
    q.prices = {0.01, -0.002};  // negative prices are allowed
    CHECK_NOTHROW(q.validate());
    CHECK(q.max_strike() == 0.5);
    q.strikes[1] = 1.5;
    CHECK_THROWS_AS(q.validate(), InputError);
}

// Randomized properties over feasible kernels.
TEST_CASE("pricing properties") {
    const Grid g(1.0, 200);
    Rng rng(2024);
    for (int t = 0; t < 200; ++t) {
        const auto p1 = random_feasible_kernel(g, rng);
        const auto p2 = random_feasible_kernel(g, rng);
        const double k1 = rng.uniform();
        const double k2 = k1 + (1.0 - k1) * rng.uniform();

        const double d = price_put(p1, k2) - price_put(p1, k1);
        CHECK(d >= 0.0);
        CHECK(d <= p1.sup_value() * (k2 - k1) * (1.0 + 1e-12) + 1e-15);

        const double a = rng.uniform(0.0, 3.0);
        const double b = rng.uniform(0.0, 3.0);
        const auto mix = CumulativeKernel::combine(a, p1, b, p2);
        const double lhs = price_put(mix, k1);
        const double rhs = a * price_put(p1, k1) + b * price_put(p2, k1);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));

        const std::size_t j = 1 + rng.next_u64() % (g.cells() - 1);
        const double second = price_put(p1, g.node(j + 1)) - 2 * price_put(p1, g.node(j)) + price_put(p1, g.node(j - 1));
        CHECK(second >= -1e-12);

        const auto payoff = put_payoff(g, k1);
        const double gap = std::abs(price_payoff(p1, payoff) - price_payoff(p2, payoff));
        CHECK(gap <= total_variation(payoff) * sup_distance(p1, p2) + 1e-10);
    }
}
