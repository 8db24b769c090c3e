#include "ontrac/roadnet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ontrac {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string format_double(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    // Prefer the shortest form that round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[32];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &back);
        if (back == v) return shorter;
    }
    return buf;
}

SegmentId RoadNetwork::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? kNoSegment : it->second;
}

SegmentId RoadNetwork::add_segment(std::string name, double length) {
    if (name.empty()) throw ValidationError("empty segment name");
    for (char c : name)
        if (c == ',' || c == ';' || std::isspace(static_cast<unsigned char>(c)))
            throw ValidationError("segment name '" + name + "' contains a delimiter character");
    if (by_name_.count(name)) throw ValidationError("duplicate segment name '" + name + "'");
    SegmentId id = static_cast<SegmentId>(segments_.size());
    by_name_.emplace(name, id);
    segments_.push_back({id, length, std::move(name)});
    adjacency_.emplace_back();
    reverse_.emplace_back();
    return id;
}

void RoadNetwork::add_edge(SegmentId from, SegmentId to) {
    adjacency_[static_cast<std::size_t>(from)].push_back(to);
}

void RoadNetwork::finalize() {
    for (const auto& seg : segments_) {
        if (!(seg.length > 0.0) || !std::isfinite(seg.length))
            throw ValidationError("segment '" + seg.name + "' has nonpositive length");
    }
    for (auto& r : reverse_) r.clear();
    for (std::size_t i = 0; i < adjacency_.size(); ++i) {
        for (SegmentId to : adjacency_[i]) {
            if (!valid(to))
                throw ValidationError("segment '" + segments_[i].name + "' references unknown successor id");
            reverse_[static_cast<std::size_t>(to)].push_back(static_cast<SegmentId>(i));
        }
    }
}

namespace {

double parse_length(std::string_view field, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
        throw ParseError("bad length '" + std::string(field) + "'", line_no);
    return v;
}

}  // namespace

RoadNetwork load_network(std::string_view source) {
    RoadNetwork net;
    // First pass declares all segments so forward references in successor
    // lists resolve; second pass adds edges.
    struct Pending {
        std::size_t line_no;
        std::string from;
        std::vector<std::string> succ;
    };
    std::vector<Pending> pending;

    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= source.size()) {
        std::size_t end = source.find('\n', start);
        if (end == std::string_view::npos) end = source.size();
        std::string_view line = trim(source.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            if (end == source.size()) break;
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != 3) throw ParseError("expected 3 comma-separated fields", line_no);
        std::string name(trim(fields[0]));
        double length = parse_length(trim(fields[1]), line_no);
        Pending p{line_no, name, {}};
        std::string_view succ_field = trim(fields[2]);
        if (!succ_field.empty()) {
            for (auto s : split(succ_field, ';')) {
                s = trim(s);
                if (s.empty()) throw ParseError("empty successor name", line_no);
                p.succ.emplace_back(s);
            }
        }
        try {
            net.add_segment(name, length);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
        pending.push_back(std::move(p));
        if (end == source.size()) break;
    }

    for (const auto& p : pending) {
        SegmentId from = net.find(p.from);
        for (const auto& s : p.succ) {
            SegmentId to = net.find(s);
            if (to == kNoSegment)
                throw ValidationError("segment '" + p.from + "' references undeclared segment '" + s + "'");
            net.add_edge(from, to);
        }
    }
    net.finalize();
    return net;
}

RoadNetwork load_network_file(const std::string& path) { return load_network(read_file(path)); }

std::string serialize_network(const RoadNetwork& net) {
    std::string out;
    for (const auto& seg : net.segments()) {
        out += seg.name;
        out += ',';
        out += format_double(seg.length);
        out += ',';
        const auto& succ = net.successors(seg.id);
        for (std::size_t i = 0; i < succ.size(); ++i) {
            if (i) out += ';';
            out += net.name(succ[i]);
        }
        out += '\n';
    }
    return out;
}

StationaryDistribution pagerank(const RoadNetwork& net, double damping, double tol, std::size_t max_iter) {
    if (net.empty()) throw ValidationError("pagerank over an empty network");
    if (!(damping > 0.0) || damping > 1.0) throw ValidationError("damping must be in (0,1]");
    if (!(tol > 0.0)) throw ValidationError("tol must be positive");

    const std::size_t n = net.size();
    std::vector<double> p(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n, 0.0);
    const double teleport = (1.0 - damping) / static_cast<double>(n);

    StationaryDistribution out;
    out.damping = damping;
    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        double dangling_mass = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (net.out_degree(static_cast<SegmentId>(i)) == 0) dangling_mass += p[i];
        const double base = teleport + damping * dangling_mass / static_cast<double>(n);
        std::fill(next.begin(), next.end(), base);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& succ = net.successors(static_cast<SegmentId>(i));
            if (succ.empty()) continue;
            const double share = damping * p[i] / static_cast<double>(succ.size());
            for (SegmentId j : succ) next[static_cast<std::size_t>(j)] += share;
        }
        double residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) residual += std::abs(next[i] - p[i]);
        p.swap(next);
        out.iterations = iter;
        out.residual = residual;
        if (residual < tol) {
            out.pi = std::move(p);
            return out;
        }
    }
    throw std::runtime_error("pagerank did not converge in " + std::to_string(max_iter) + " iterations (residual " +
                             std::to_string(out.residual) + ")");
}

double network_entropy(const RoadNetwork& net, const StationaryDistribution& dist) {
    if (net.empty()) throw ValidationError("network_entropy over an empty network");
    if (dist.pi.size() != net.size()) throw ValidationError("stationary distribution size mismatch");
    // 1 - sum pi/deg, computed as sum pi*(deg-1)/deg so that out-degree-1
    // graphs give exactly zero.
    double h = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        std::size_t deg = net.out_degree(static_cast<SegmentId>(i));
        if (deg == 0) deg = net.size();  // teleport fan-out
        h += dist.pi[i] * (static_cast<double>(deg - 1) / static_cast<double>(deg));
    }
    if (h < 0.0) h = 0.0;
    if (h >= 1.0) h = std::nextafter(1.0, 0.0);
    return h;
}

}  // namespace ontrac
