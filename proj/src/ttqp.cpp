#include "ontrac/ttqp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

namespace ontrac {

void TravelTimeModel::validate(std::size_t n_segments) const {
    if (phi.size() != n_segments || omega.size() != n_segments)
        throw ValidationError("travel-time model does not match the network size");
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (!(phi[i] > 0.0)) throw ValidationError("phi must be positive");
        if (!(omega[i] > 0.0)) throw ValidationError("omega must be positive");
    }
    if (!(delta > 0.0)) throw ValidationError("delta must be positive");
    if (!(sigma_star > 0.0)) throw ValidationError("sigma_star must be positive");
}

double gps_temporal_error(double sigma_star, double elapsed, double path_length) {
    if (!(sigma_star > 0.0)) throw ValidationError("sigma_star must be positive");
    if (!(elapsed > 0.0)) throw ValidationError("elapsed must be positive");
    if (!(path_length > 0.0)) throw ValidationError("path_length must be positive");
    return sigma_star * elapsed / path_length;
}

double QPInstance::objective(std::span<const double> x) const {
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += q(i, j) * x[j];
        quad += x[i] * row;
    }
    double lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) lin += c[i] * x[i];
    return 0.5 * quad + lin;
}

QPInstance build_qp(const TravelTimeModel& model, std::span<const GpsBlock> blocks,
                    std::span<const double> lengths) {
    if (blocks.empty()) throw ValidationError("build_qp needs at least one block");
    QPInstance qp;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        if (blocks[j].segments.empty()) throw ValidationError("empty GPS block");
        if (!(blocks[j].observed_gap > 0.0)) throw ValidationError("block gap must be positive");
        if (!(blocks[j].sigma > 0.0)) throw ValidationError("block sigma must be positive");
        for (std::size_t i = 0; i < blocks[j].segments.size(); ++i)
            qp.variable_map.push_back({j, i, blocks[j].segments[i]});
    }
    const std::size_t n = qp.variable_map.size();
    qp.n = n;
    qp.Q.assign(n * n, 0.0);
    qp.c.assign(n, 0.0);

    // Travel-time priors: (x_i - phi_i)^2 / (2 omega_i^2).
    for (std::size_t i = 0; i < n; ++i) {
        SegmentId seg = qp.variable_map[i].segment;
        double w2 = model.omega[static_cast<std::size_t>(seg)];
        w2 *= w2;
        qp.q(i, i) += 1.0 / w2;
        qp.c[i] -= model.phi[static_cast<std::size_t>(seg)] / w2;
    }

    // Smoothness on per-meter rates of every adjacent pair, across block
    // boundaries: (x_i/L_i - x_{i-1}/L_{i-1})^2 / (2 delta^2).
    const double d2 = model.delta * model.delta;
    for (std::size_t i = 1; i < n; ++i) {
        double la = lengths[static_cast<std::size_t>(qp.variable_map[i - 1].segment)];
        double lb = lengths[static_cast<std::size_t>(qp.variable_map[i].segment)];
        qp.q(i - 1, i - 1) += 1.0 / (d2 * la * la);
        qp.q(i, i) += 1.0 / (d2 * lb * lb);
        qp.q(i - 1, i) -= 1.0 / (d2 * la * lb);
        qp.q(i, i - 1) -= 1.0 / (d2 * la * lb);
    }

    // GPS ties: (sum_{i in block j} x_i - gap_j)^2 / (2 sigma_j^2).
    std::size_t offset = 0;
    for (const auto& block : blocks) {
        const std::size_t m = block.segments.size();
        const double s2 = block.sigma * block.sigma;
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) qp.q(offset + a, offset + b) += 1.0 / s2;
            qp.c[offset + a] -= block.observed_gap / s2;
        }
        offset += m;
    }
    return qp;
}

double travel_time_log_density(const TravelTimeModel& model, std::span<const GpsBlock> blocks,
                               std::span<const double> lengths, std::span<const double> x) {
    constexpr double half_log_2pi = 0.9189385332046727;
    double ll = 0.0;
    std::size_t offset = 0;
    std::size_t pos = 0;
    double prev_rate = 0.0;
    bool have_prev = false;
    for (const auto& block : blocks) {
        double sum = 0.0;
        for (std::size_t i = 0; i < block.segments.size(); ++i, ++pos) {
            const auto seg = static_cast<std::size_t>(block.segments[i]);
            const double t = x[offset + i];
            const double w = model.omega[seg];
            const double z = (t - model.phi[seg]) / w;
            ll += -0.5 * z * z - std::log(w) - half_log_2pi;
            const double rate = t / lengths[seg];
            if (have_prev) {
                const double zr = (rate - prev_rate) / model.delta;
                ll += -0.5 * zr * zr - std::log(model.delta) - half_log_2pi;
            }
            prev_rate = rate;
            have_prev = true;
            sum += t;
        }
        const double zg = (sum - block.observed_gap) / block.sigma;
        ll += -0.5 * zg * zg - std::log(block.sigma) - half_log_2pi;
        offset += block.segments.size();
    }
    return ll;
}

QpConvergenceError::QpConvergenceError(std::vector<double> best, double residual, std::size_t iterations)
    : std::runtime_error("QP solver did not reach tolerance after " + std::to_string(iterations) +
                         " sweeps (KKT residual " + std::to_string(residual) + ")"),
      best_(std::move(best)),
      residual_(residual) {}

namespace {

// Plain dense Cholesky; returns false when the matrix is not positive
// definite. Only the result of the check is used.
bool cholesky_ok(const QPInstance& qp) {
    const std::size_t n = qp.n;
    std::vector<double> L(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = qp.q(i, j);
            for (std::size_t k = 0; k < j; ++k) sum -= L[i * n + k] * L[j * n + k];
            if (i == j) {
                if (!(sum > 0.0)) return false;
                L[i * n + i] = std::sqrt(sum);
            } else {
                L[i * n + j] = sum / L[j * n + j];
            }
        }
    }
    return true;
}

double kkt_residual(const QPInstance& qp, std::span<const double> x, std::span<const double> g) {
    double res = 0.0;
    for (std::size_t i = 0; i < qp.n; ++i) {
        double r = x[i] > 0.0 ? std::abs(g[i]) : std::max(0.0, -g[i]);
        res = std::max(res, r);
    }
    return res;
}

}  // namespace

std::vector<double> solve_qp(const QPInstance& qp, const QpOptions& opts) {
    const std::size_t n = qp.n;
    if (n == 0) return {};
    if (!cholesky_ok(qp)) throw ValidationError("QP matrix is not positive definite");

    // Any nonnegative start converges; the clipped Newton point per coordinate
    // is usually close already.
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double diag = qp.q(i, i);
        x[i] = std::max(0.0, -qp.c[i] / diag);
    }
    // g = Qx + c, maintained incrementally.
    std::vector<double> g(qp.c.begin(), qp.c.end());
    for (std::size_t j = 0; j < n; ++j) {
        if (x[j] == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) g[i] += qp.q(i, j) * x[j];
    }

    double res = kkt_residual(qp, x, g);
    for (std::size_t sweep = 0; sweep < opts.max_iter; ++sweep) {
        if (res <= opts.tol) return x;
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = std::max(0.0, x[i] - g[i] / qp.q(i, i));
            const double delta = xi - x[i];
            if (delta == 0.0) continue;
            x[i] = xi;
            for (std::size_t j = 0; j < n; ++j) g[j] += qp.q(j, i) * delta;
        }
        res = kkt_residual(qp, x, g);
    }
    if (res <= opts.tol) return x;
    throw QpConvergenceError(std::move(x), res, opts.max_iter);
}

BlockPartition make_blocks(const Trajectory& traj, const RoadNetwork& net, double sigma_star) {
    if (traj.points.empty()) throw ValidationError("empty trajectory");
    for (const auto& p : traj.points)
        if (!net.valid(p.segment))
            throw ValidationError("trajectory '" + traj.object + "' references an unknown segment");
    if (!traj.points.back().timestamp)
        throw ValidationError("trajectory '" + traj.object + "' does not end with an observed timestamp");

    BlockPartition part;
    std::size_t anchor;  // first position covered by blocks
    if (traj.start_time) {
        part.anchor_time = *traj.start_time;
        anchor = 0;
    } else {
        std::size_t first_obs = 0;
        while (!traj.points[first_obs].timestamp) ++first_obs;
        part.anchor_time = *traj.points[first_obs].timestamp;
        anchor = first_obs + 1;
    }
    part.first_position = anchor;

    GpsBlock current;
    double prev_time = part.anchor_time;
    double path = 0.0;
    for (std::size_t pos = anchor; pos < traj.points.size(); ++pos) {
        const auto& p = traj.points[pos];
        current.segments.push_back(p.segment);
        path += net.length(p.segment);
        if (!p.timestamp) continue;
        const double gap = *p.timestamp - prev_time;
        if (!(gap > 0.0))
            throw ValidationError("non-increasing observed timestamps in trajectory '" + traj.object + "'");
        current.observed_gap = gap;
        current.sigma = gps_temporal_error(sigma_star, gap, path);
        part.blocks.push_back(std::move(current));
        current = GpsBlock{};
        prev_time = *p.timestamp;
        path = 0.0;
    }
    return part;
}

InferredTimes infer_travel_times(const TravelTimeModel& model, const Trajectory& traj, const RoadNetwork& net,
                                 const QpOptions& opts) {
    model.validate(net.size());
    BlockPartition part = make_blocks(traj, net, model.sigma_star);

    InferredTimes out;
    out.first_position = part.first_position;
    out.anchor_time = part.anchor_time;
    if (part.blocks.empty()) return out;  // single observed update, nothing to infer

    std::vector<double> lengths(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) lengths[i] = net.length(static_cast<SegmentId>(i));

    QPInstance qp = build_qp(model, part.blocks, lengths);
    out.t_prime = solve_qp(qp, opts);
    out.objective = qp.objective(out.t_prime);
    out.absolute.resize(out.t_prime.size());
    double acc = part.anchor_time;
    for (std::size_t i = 0; i < out.t_prime.size(); ++i) {
        acc += out.t_prime[i];
        out.absolute[i] = acc;
    }
    return out;
}

double estimate_delta(std::span<const Trajectory> train, const RoadNetwork& net, double floor) {
    std::vector<double> diffs;
    for (const auto& traj : train) {
        double prev_rate = 0.0;
        bool have_prev = false;
        double prev_time = 0.0;
        bool have_time = false;
        if (traj.start_time) {
            prev_time = *traj.start_time;
            have_time = true;
        }
        double path = 0.0;
        for (const auto& p : traj.points) {
            if (!net.valid(p.segment)) throw ValidationError("unknown segment in delta estimation");
            path += net.length(p.segment);
            if (!p.timestamp) continue;
            if (have_time && path > 0.0) {
                const double gap = *p.timestamp - prev_time;
                if (gap > 0.0) {
                    const double rate = gap / path;
                    if (have_prev) diffs.push_back(rate - prev_rate);
                    prev_rate = rate;
                    have_prev = true;
                }
            }
            prev_time = *p.timestamp;
            have_time = true;
            path = 0.0;
        }
    }
    if (diffs.empty()) return floor;
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= static_cast<double>(diffs.size());
    return std::max(std::sqrt(var), floor);
}

std::string serialize_tt_model(const TravelTimeModel& model, const RoadNetwork& net) {
    std::string out = "delta=" + format_double(model.delta) + ",sigma_star=" + format_double(model.sigma_star) +
                      ",omega_floor=" + format_double(model.omega_floor) + "\n";
    for (std::size_t i = 0; i < net.size(); ++i) {
        out += net.name(static_cast<SegmentId>(i));
        out += ',';
        out += format_double(model.phi[i]);
        out += ',';
        out += format_double(model.omega[i]);
        out += '\n';
    }
    return out;
}

TravelTimeModel parse_tt_model(std::string_view source, const RoadNetwork& net) {
    TravelTimeModel model;
    model.phi.assign(net.size(), 0.0);
    model.omega.assign(net.size(), 0.0);
    std::vector<bool> seen(net.size(), false);

    std::size_t line_no = 0;
    std::size_t start = 0;
    bool header_seen = false;
    auto parse_d = [&](std::string_view f) {
        double v = 0.0;
        auto res = std::from_chars(f.data(), f.data() + f.size(), v);
        if (res.ec != std::errc() || res.ptr != f.data() + f.size())
            throw ParseError("bad number '" + std::string(f) + "'", line_no);
        return v;
    };
    while (start <= source.size()) {
        std::size_t end = source.find('\n', start);
        if (end == std::string_view::npos) end = source.size();
        std::string_view line = trim(source.substr(start, end - start));
        bool at_eof = end == source.size();
        start = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            if (at_eof) break;
            continue;
        }
        if (!header_seen) {
            for (auto field : split(line, ',')) {
                field = trim(field);
                if (field.starts_with("delta=")) model.delta = parse_d(field.substr(6));
                else if (field.starts_with("sigma_star=")) model.sigma_star = parse_d(field.substr(11));
                else if (field.starts_with("omega_floor=")) model.omega_floor = parse_d(field.substr(12));
                else throw ParseError("unknown header field", line_no);
            }
            header_seen = true;
            if (at_eof) break;
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != 3) throw ParseError("expected name,phi,omega", line_no);
        SegmentId id = net.find(trim(fields[0]));
        if (id == kNoSegment)
            throw ValidationError("unknown segment '" + std::string(trim(fields[0])) + "' in travel-time model");
        model.phi[static_cast<std::size_t>(id)] = parse_d(trim(fields[1]));
        model.omega[static_cast<std::size_t>(id)] = parse_d(trim(fields[2]));
        seen[static_cast<std::size_t>(id)] = true;
        if (at_eof) break;
    }
    if (!header_seen) throw ValidationError("travel-time model file missing header");
    for (std::size_t i = 0; i < net.size(); ++i)
        if (!seen[i])
            throw ValidationError("travel-time model missing segment '" + net.name(static_cast<SegmentId>(i)) + "'");
    model.validate(net.size());
    return model;
}

}  // namespace ontrac
