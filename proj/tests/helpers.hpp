#ifndef ONTRAC_TESTS_HELPERS_HPP
#define ONTRAC_TESTS_HELPERS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ontrac/synth.hpp"
#include "ontrac/trajmodel.hpp"
#include "ontrac/ttqp.hpp"

namespace ontrac::testing {

/// The 2x2 grid running-example network: 12 streets, 2 m each.
inline RoadNetwork running_example_network() { return make_grid_network(2, 2, 2.0); }

inline const char* running_example_stream_text() {
    return "o_1,s_2_1,10\n"
           "o_1,s_2_3,20\n"
           "o_1,s_3_4,40\n"
           "o_2,s_1_4,5\n"
           "o_2,s_2_3,15\n"
           "o_2,s_3_2,30\n"
           "o_3,s_3_2,\n"
           "o_3,s_2_3,\n"
           "o_3,s_1_4,17\n"
           "o_4,s_1_2,10\n"
           "o_4,s_2_1,15\n"
           "o_4,s_2_3,\n"
           "o_4,s_3_4,35\n";
}

inline Trajectory make_traj(const RoadNetwork& net, std::string object,
                            const std::vector<std::pair<const char*, double>>& points,
                            double missing_marker = -1.0) {
    Trajectory t;
    t.object = std::move(object);
    for (const auto& [name, time] : points) {
        SegmentId id = net.find(name);
        if (id == kNoSegment) throw std::runtime_error(std::string("bad name ") + name);
        t.points.push_back({id, time == missing_marker ? std::nullopt : std::optional<double>(time)});
    }
    return t;
}

/// Dense transition-matrix power iteration, written independently of the
/// production path: builds the full n x n damped matrix and multiplies.
inline std::vector<double> dense_pagerank_oracle(const RoadNetwork& net, double damping, double tol) {
    const std::size_t n = net.size();
    std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& succ = net.successors(static_cast<SegmentId>(i));
        if (succ.empty()) {
            for (std::size_t j = 0; j < n; ++j) M[j][i] += 1.0 / static_cast<double>(n);
        } else {
            for (SegmentId j : succ) M[static_cast<std::size_t>(j)][i] += 1.0 / static_cast<double>(succ.size());
        }
    }
    std::vector<double> p(n, 1.0 / static_cast<double>(n)), next(n);
    const double teleport = (1.0 - damping) / static_cast<double>(n);
    for (int iter = 0; iter < 1000000; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += M[i][j] * p[j];
            next[i] = teleport + damping * acc;
        }
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) diff += std::abs(next[i] - p[i]);
        p = next;
        if (diff < tol) break;
    }
    return p;
}

/// Test-side replay of the fused clock at every observed position, written
/// independently of the production compressor.
inline std::vector<std::pair<std::size_t, double>> fused_clock_oracle(const TravelTimeModel& model,
                                                                      const Trajectory& traj,
                                                                      const RoadNetwork& net) {
    std::vector<std::pair<std::size_t, double>> fused;
    double t_hat = 0.0, w_hat = 0.0, d = 0.0;
    double t_star = 0.0, last_t = 0.0, last_d = 0.0;
    bool anchored = false;
    for (std::size_t pos = 0; pos < traj.points.size(); ++pos) {
        const auto& p = traj.points[pos];
        const auto seg = static_cast<std::size_t>(p.segment);
        t_hat += model.phi[seg];
        w_hat += model.omega[seg] * model.omega[seg];
        d += net.length(p.segment);
        if (!p.timestamp) continue;
        if (!anchored) {
            t_star = *p.timestamp;
            anchored = true;
        } else {
            const double gap = *p.timestamp - last_t;
            const double sigma = model.sigma_star * gap / (d - last_d);
            t_star = t_star + (t_hat * sigma * sigma + gap * w_hat) / (w_hat + sigma * sigma);
        }
        fused.emplace_back(pos, t_star);
        last_t = *p.timestamp;
        last_d = d;
        t_hat = 0.0;
        w_hat = 0.0;
    }
    return fused;
}

}  // namespace ontrac::testing

#endif
