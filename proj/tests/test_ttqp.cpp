#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "ontrac/ttqp.hpp"

using namespace ontrac;

namespace {

struct Instance {
    TravelTimeModel model;
    std::vector<GpsBlock> blocks;
    std::vector<double> lengths;
};

// Negative log-likelihood up to an additive constant, written directly from
// the three Gaussian components and independent of build_qp.
double neg_log_like(const Instance& inst, const std::vector<double>& x) {
    double total = 0.0;
    std::size_t pos = 0;
    double prev_rate = 0.0;
    bool have_prev = false;
    for (const auto& block : inst.blocks) {
        double block_sum = 0.0;
        for (SegmentId seg : block.segments) {
            const double t = x[pos++];
            const double z = (t - inst.model.phi[static_cast<std::size_t>(seg)]) /
                             inst.model.omega[static_cast<std::size_t>(seg)];
            total += 0.5 * z * z;
            const double rate = t / inst.lengths[static_cast<std::size_t>(seg)];
            if (have_prev) {
                const double zr = (rate - prev_rate) / inst.model.delta;
                total += 0.5 * zr * zr;
            }
            prev_rate = rate;
            have_prev = true;
            block_sum += t;
        }
        const double zg = (block_sum - block.observed_gap) / block.sigma;
        total += 0.5 * zg * zg;
    }
    return total;
}

// Shrinking grid search over [0, hi]^n; the solver oracle for n <= 3.
std::vector<double> grid_minimize(const QPInstance& qp, double hi, int points = 11, int rounds = 14) {
    const std::size_t n = qp.n;
    std::vector<double> lo(n, 0.0), width(n, hi), best(n, 0.0);
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> x(n, 0.0);
    for (int round = 0; round < rounds; ++round) {
        std::vector<std::size_t> idx(n, 0);
        while (true) {
            for (std::size_t i = 0; i < n; ++i)
                x[i] = lo[i] + width[i] * static_cast<double>(idx[i]) / (points - 1);
            const double v = qp.objective(x);
            if (v < best_val) {
                best_val = v;
                best = x;
            }
            std::size_t d = 0;
            while (d < n && ++idx[d] == static_cast<std::size_t>(points)) idx[d++] = 0;
            if (d == n) break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            width[i] *= 2.4 / (points - 1);
            lo[i] = std::max(0.0, best[i] - width[i] / 2.0);
        }
    }
    return best;
}

void check_kkt(const QPInstance& qp, const std::vector<double>& x, double tol) {
    for (std::size_t i = 0; i < qp.n; ++i) {
        double g = qp.c[i];
        for (std::size_t j = 0; j < qp.n; ++j) g += qp.q(i, j) * x[j];
        if (x[i] > 0.0)
            CHECK(std::abs(g) <= tol);
        else
            CHECK(g >= -tol);
    }
}

// Three 2 m segments in a row, parameters of the worked inference instance.
Instance worked_instance() {
    Instance inst;
    inst.model.phi = {6.0, 12.0, 7.0};
    inst.model.omega = {1.0, 2.0, 2.0};
    inst.model.delta = 2.5;
    inst.model.sigma_star = 1.0;
    inst.lengths = {2.0, 2.0, 2.0};
    GpsBlock block;
    block.segments = {0, 1, 2};
    block.observed_gap = 17.0;
    block.sigma = 3.0;
    inst.blocks.push_back(block);
    return inst;
}

Instance random_instance(std::mt19937_64& rng, std::size_t max_segments = 8) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Instance inst;
    std::uniform_int_distribution<std::size_t> nseg(1, max_segments);
    const std::size_t n = nseg(rng);
    for (std::size_t i = 0; i < n; ++i) {
        inst.lengths.push_back(30.0 + 170.0 * u01(rng));
        inst.model.phi.push_back(inst.lengths.back() / (8.0 + 12.0 * u01(rng)));
        inst.model.omega.push_back(0.5 + 4.5 * u01(rng));
    }
    inst.model.delta = 0.05 + 2.0 * u01(rng);
    double phi_sum = 0.0;
    GpsBlock block;
    for (std::size_t i = 0; i < n; ++i) {
        block.segments.push_back(static_cast<SegmentId>(i));
        phi_sum += inst.model.phi[i];
        const bool close = i + 1 == n || (block.segments.size() >= 2 && u01(rng) < 0.4);
        if (close) {
            block.observed_gap = std::max(0.5, phi_sum * (0.6 + 0.8 * u01(rng)));
            block.sigma = 0.5 + 4.5 * u01(rng);
            inst.blocks.push_back(block);
            block = GpsBlock{};
            phi_sum = 0.0;
        }
    }
    return inst;
}

QPInstance manual_qp(std::vector<double> Q, std::vector<double> c) {
    QPInstance qp;
    qp.n = c.size();
    qp.Q = std::move(Q);
    qp.c = std::move(c);
    return qp;
}

}  // namespace

TEST_CASE("gps temporal error") {
    CHECK(gps_temporal_error(5.0, 60.0, 100.0) == doctest::Approx(3.0));
    CHECK(gps_temporal_error(5.0, 60.0, 200.0) == doctest::Approx(1.5));  // doubling the path halves it
    CHECK(gps_temporal_error(3.0, 17.0, 6.0) == doctest::Approx(8.5));
    CHECK_THROWS_AS(gps_temporal_error(0.0, 1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(gps_temporal_error(1.0, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(gps_temporal_error(1.0, 1.0, 0.0), ValidationError);
}

TEST_CASE("worked instance assembles the expected matrices") {
    Instance inst = worked_instance();
    QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
    REQUIRE(qp.n == 3);

    const double third = 1.0 / 9.0;
    CHECK(qp.q(0, 0) == doctest::Approx(1.0 + 0.04 + third));
    CHECK(qp.q(1, 1) == doctest::Approx(0.25 + 0.08 + third));
    CHECK(qp.q(2, 2) == doctest::Approx(0.25 + 0.04 + third));
    CHECK(qp.q(0, 1) == doctest::Approx(-0.04 + third));
    CHECK(qp.q(1, 2) == doctest::Approx(-0.04 + third));
    CHECK(qp.q(0, 2) == doctest::Approx(third));
    CHECK(qp.c[0] == doctest::Approx(-6.0 - 17.0 / 9.0));
    CHECK(qp.c[1] == doctest::Approx(-3.0 - 17.0 / 9.0));
    CHECK(qp.c[2] == doctest::Approx(-1.75 - 17.0 / 9.0));

    SUBCASE("matrix is symmetric") {
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(qp.q(i, j) == doctest::Approx(qp.q(j, i)).epsilon(1e-14));
    }
    SUBCASE("variable map covers the block") {
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(qp.variable_map[i].block == 0);
            CHECK(qp.variable_map[i].index_in_block == i);
            CHECK(qp.variable_map[i].segment == static_cast<SegmentId>(i));
        }
    }
}

TEST_CASE("single segment, single block reduces to a two-Gaussian product") {
    Instance inst;
    inst.model.phi = {10.0};
    inst.model.omega = {2.0};
    inst.model.delta = 1.0;
    inst.model.sigma_star = 1.0;
    inst.lengths = {100.0};
    GpsBlock block;
    block.segments = {0};
    block.observed_gap = 14.0;
    block.sigma = 3.0;
    inst.blocks.push_back(block);

    QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
    CHECK(qp.q(0, 0) == doctest::Approx(1.0 / 4.0 + 1.0 / 9.0));
    CHECK(qp.c[0] == doctest::Approx(-10.0 / 4.0 - 14.0 / 9.0));
    auto x = solve_qp(qp);
    const double expected = (10.0 / 4.0 + 14.0 / 9.0) / (1.0 / 4.0 + 1.0 / 9.0);
    CHECK(x[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("objective equality against the independent likelihood evaluator") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Instance inst = random_instance(rng);
        QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);

        std::vector<double> x0(qp.n), x(qp.n);
        for (std::size_t i = 0; i < qp.n; ++i) x0[i] = 40.0 * u01(rng);
        const double offset = qp.objective(x0) - neg_log_like(inst, x0);
        for (int point = 0; point < 100; ++point) {
            for (std::size_t i = 0; i < qp.n; ++i) x[i] = 40.0 * u01(rng);
            const double diff = (qp.objective(x) - neg_log_like(inst, x)) - offset;
            CHECK(std::abs(diff) <= 1e-8);
        }
    }
}

TEST_CASE("solver basics") {
    SUBCASE("separable quadratic") {
        auto qp = manual_qp({1, 0, 0, 1}, {-1, -2});
        auto x = solve_qp(qp);
        CHECK(x[0] == doctest::Approx(1.0));
        CHECK(x[1] == doctest::Approx(2.0));
    }
    SUBCASE("active nonnegativity bound") {
        auto qp = manual_qp({1, 0, 0, 1}, {1, -2});
        auto x = solve_qp(qp);
        CHECK(x[0] == 0.0);
        CHECK(x[1] == doctest::Approx(2.0));
        check_kkt(qp, x, 1e-8);
    }
    SUBCASE("indefinite matrix is rejected") {
        auto qp = manual_qp({1, 2, 2, 1}, {-1, -1});
        CHECK_THROWS_AS(solve_qp(qp), ValidationError);
    }
    SUBCASE("iteration cap raises a convergence error carrying the best iterate") {
        auto qp = manual_qp({2, 1, 1, 2}, {-1, -1});
        QpOptions opts;
        opts.max_iter = 0;
        try {
            solve_qp(qp, opts);
            FAIL("expected QpConvergenceError");
        } catch (const QpConvergenceError& e) {
            CHECK(e.best().size() == 2);
            CHECK(e.residual() > 0.0);
        }
    }
}

TEST_CASE("solver matches the grid oracle on small instances") {
    QpOptions opts;
    opts.tol = 1e-10;

    SUBCASE("worked instance, likelihood-derived") {
        Instance inst = worked_instance();
        QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
        auto x = solve_qp(qp, opts);
        auto oracle = grid_minimize(qp, 40.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x[i] - oracle[i]) <= 1e-3);
        check_kkt(qp, x, 1e-6);
    }
    SUBCASE("worked instance, matrices frozen as published") {
        auto qp = manual_qp({1.12, 0.105, 0.11, 0.105, 0.37, 0.105, 0.11, 0.105, 0.37}, {-4.11, -1.11, 0.14});
        auto x = solve_qp(qp, opts);
        auto oracle = grid_minimize(qp, 40.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x[i] - oracle[i]) <= 1e-3);
        check_kkt(qp, x, 1e-6);
    }
    SUBCASE("frozen matrices with the fully negated linear term") {
        auto qp = manual_qp({1.12, 0.105, 0.11, 0.105, 0.37, 0.105, 0.11, 0.105, 0.37}, {-7.89, -4.89, -3.64});
        auto x = solve_qp(qp, opts);
        auto oracle = grid_minimize(qp, 40.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x[i] - oracle[i]) <= 1e-3);
        // Long-established solution of this variant.
        CHECK(x[0] == doctest::Approx(5.6).epsilon(0.02));
        CHECK(x[2] == doctest::Approx(5.3).epsilon(0.02));
    }
    SUBCASE("random n<=3 instances") {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 15; ++trial) {
            Instance inst = random_instance(rng, 3);
            QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
            auto x = solve_qp(qp, opts);
            double hi = 1.0;
            for (const auto& b : inst.blocks) hi = std::max(hi, 3.0 * b.observed_gap);
            for (double p : inst.model.phi) hi = std::max(hi, 4.0 * p);
            auto oracle = grid_minimize(qp, hi);
            for (std::size_t i = 0; i < qp.n; ++i) CHECK(std::abs(x[i] - oracle[i]) <= 1e-3);
            check_kkt(qp, x, 1e-6);
        }
    }
}

TEST_CASE("solution properties") {
    std::mt19937_64 rng(31);
    SUBCASE("objective no worse than natural starting points") {
        for (int trial = 0; trial < 10; ++trial) {
            Instance inst = random_instance(rng);
            QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
            auto x = solve_qp(qp);
            std::vector<double> phi_start(qp.n), const_speed(qp.n);
            std::size_t pos = 0;
            for (const auto& block : inst.blocks) {
                double len_sum = 0.0;
                for (SegmentId seg : block.segments) len_sum += inst.lengths[static_cast<std::size_t>(seg)];
                for (SegmentId seg : block.segments) {
                    phi_start[pos] = inst.model.phi[static_cast<std::size_t>(seg)];
                    const_speed[pos] = block.observed_gap * inst.lengths[static_cast<std::size_t>(seg)] / len_sum;
                    ++pos;
                }
            }
            CHECK(qp.objective(x) <= qp.objective(phi_start) + 1e-9);
            CHECK(qp.objective(x) <= qp.objective(const_speed) + 1e-9);
        }
    }
    SUBCASE("time-unit scaling scales the solution") {
        Instance inst = random_instance(rng, 6);
        QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
        auto x = solve_qp(qp);

        const double s = 3.5;
        Instance scaled = inst;
        for (auto& v : scaled.model.phi) v *= s;
        for (auto& v : scaled.model.omega) v *= s;
        scaled.model.delta *= s;
        for (auto& b : scaled.blocks) {
            b.observed_gap *= s;
            b.sigma *= s;
        }
        QPInstance qp2 = build_qp(scaled.model, scaled.blocks, scaled.lengths);
        auto x2 = solve_qp(qp2);
        for (std::size_t i = 0; i < qp.n; ++i) CHECK(x2[i] == doctest::Approx(s * x[i]).epsilon(1e-6));
    }
    SUBCASE("with prior and smoothness off, block sums match the observations") {
        for (int trial = 0; trial < 5; ++trial) {
            Instance inst = random_instance(rng);
            for (auto& w : inst.model.omega) w = 1e6;
            inst.model.delta = 1e6;
            QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
            auto x = solve_qp(qp);
            std::size_t pos = 0;
            for (const auto& block : inst.blocks) {
                double sum = 0.0;
                for (std::size_t i = 0; i < block.segments.size(); ++i) sum += x[pos++];
                CHECK(sum == doctest::Approx(block.observed_gap).epsilon(1e-6));
            }
        }
    }
    SUBCASE("positive definiteness holds on random instances") {
        for (int trial = 0; trial < 20; ++trial) {
            Instance inst = random_instance(rng);
            QPInstance qp = build_qp(inst.model, inst.blocks, inst.lengths);
            CHECK_NOTHROW(solve_qp(qp));  // solve_qp runs the Cholesky check first
        }
    }
}

TEST_CASE("travel time inference over trajectories") {
    RoadNetwork net = testing::running_example_network();

    SUBCASE("fully observed trajectory with weak smoothness fuses per segment") {
        TravelTimeModel model;
        model.phi.assign(net.size(), 10.0);
        model.omega.assign(net.size(), 2.0);
        model.delta = 1e6;
        model.sigma_star = 5.0;
        auto traj = testing::make_traj(net, "x", {{"s_1_2", 10.0}, {"s_2_1", 15.0}, {"s_2_3", 28.0}});
        auto inferred = infer_travel_times(model, traj, net);
        REQUIRE(inferred.t_prime.size() == 2);
        CHECK(inferred.first_position == 1);
        CHECK(inferred.anchor_time == 10.0);
        // One segment per block; sigma = 5 * gap / 2.
        for (std::size_t i = 0; i < 2; ++i) {
            const double gap = i == 0 ? 5.0 : 13.0;
            const double sigma = 5.0 * gap / 2.0;
            const double expected = (10.0 * sigma * sigma + gap * 4.0) / (4.0 + sigma * sigma);
            CHECK(inferred.t_prime[i] == doctest::Approx(expected).epsilon(1e-5));
        }
        CHECK(inferred.absolute[1] == doctest::Approx(10.0 + inferred.t_prime[0] + inferred.t_prime[1]));
    }

    SUBCASE("missing-start trajectory with a known start time covers every position") {
        TravelTimeModel model;
        model.phi.assign(net.size(), 10.0);
        model.omega.assign(net.size(), 2.0);
        model.phi[static_cast<std::size_t>(net.find("s_3_2"))] = 6.0;
        model.omega[static_cast<std::size_t>(net.find("s_3_2"))] = 1.0;
        model.phi[static_cast<std::size_t>(net.find("s_2_3"))] = 12.0;
        model.phi[static_cast<std::size_t>(net.find("s_1_4"))] = 7.0;
        model.delta = 2.5;
        model.sigma_star = 18.0 / 17.0;  // makes the single block's sigma exactly 3
        auto traj = testing::make_traj(net, "o_3", {{"s_3_2", -1.0}, {"s_2_3", -1.0}, {"s_1_4", 17.0}});
        traj.start_time = 0.0;

        auto part = make_blocks(traj, net, model.sigma_star);
        REQUIRE(part.blocks.size() == 1);
        CHECK(part.first_position == 0);
        CHECK(part.blocks[0].segments.size() == 3);
        CHECK(part.blocks[0].observed_gap == 17.0);
        CHECK(part.blocks[0].sigma == doctest::Approx(3.0).epsilon(1e-12));

        auto inferred = infer_travel_times(model, traj, net);
        REQUIRE(inferred.t_prime.size() == 3);
        CHECK(inferred.absolute[2] ==
              doctest::Approx(inferred.t_prime[0] + inferred.t_prime[1] + inferred.t_prime[2]));
        // The anchored sum lands near the observed end time.
        CHECK(inferred.absolute[2] == doctest::Approx(17.0).epsilon(0.35));
    }

    SUBCASE("without a start time the anchor is the first observation") {
        TravelTimeModel model;
        model.phi.assign(net.size(), 10.0);
        model.omega.assign(net.size(), 2.0);
        auto traj = testing::make_traj(net, "x", {{"s_3_2", 5.0}, {"s_2_3", -1.0}, {"s_1_4", 20.0}});
        auto inferred = infer_travel_times(model, traj, net);
        CHECK(inferred.first_position == 1);
        CHECK(inferred.t_prime.size() == 2);
    }

    SUBCASE("missing endpoints are rejected") {
        TravelTimeModel model;
        model.phi.assign(net.size(), 10.0);
        model.omega.assign(net.size(), 2.0);
        auto no_end = testing::make_traj(net, "x", {{"s_3_2", 5.0}, {"s_2_3", -1.0}});
        CHECK_THROWS_AS(infer_travel_times(model, no_end, net), ValidationError);
        auto no_obs_at_all = testing::make_traj(net, "x", {{"s_3_2", -1.0}, {"s_2_3", -1.0}});
        CHECK_THROWS_AS(infer_travel_times(model, no_obs_at_all, net), ValidationError);
    }
}

TEST_CASE("travel time model serialization round-trips") {
    RoadNetwork net = testing::running_example_network();
    TravelTimeModel model;
    model.phi.resize(net.size());
    model.omega.resize(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) {
        model.phi[i] = 5.0 + static_cast<double>(i);
        model.omega[i] = 0.25 * (1.0 + static_cast<double>(i));
    }
    model.delta = 0.123;
    model.sigma_star = 4.5;
    std::string text = serialize_tt_model(model, net);
    TravelTimeModel back = parse_tt_model(text, net);
    CHECK(back.delta == model.delta);
    CHECK(back.sigma_star == model.sigma_star);
    CHECK(back.phi == model.phi);
    CHECK(back.omega == model.omega);
}
