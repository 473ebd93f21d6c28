#include "metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace slimfl::runner {

const char* const kMetricsCsvHeader =
    "round,loss_0.5x,loss_1.0x,top1_0.5x,top1_1.0x,n_L,n_R,"
    "decoded_bits_half,decoded_bits_full,dropped_bits,comm_mW,flops";

std::vector<double> MetricsSeries::top1_full_series() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.top1_full);
    return out;
}

std::vector<double> MetricsSeries::top1_half_series() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.top1_half);
    return out;
}

std::string format_metrics_csv(const MetricsSeries& series) {
    std::string out = kMetricsCsvHeader;
    out.push_back('\n');
    char buf[256];
    for (const auto& r : series.rows) {
        std::snprintf(buf, sizeof buf,
                      "%" PRIu64 ",%.9g,%.9g,%.9g,%.9g,%u,%u,%" PRIu64 ",%" PRIu64 ",%" PRIu64
                      ",%.9g,%.9g\n",
                      r.round, r.loss_half, r.loss_full, r.top1_half, r.top1_full, r.n_left,
                      r.n_right, r.decoded_bits_half, r.decoded_bits_full, r.dropped_bits,
                      r.comm_mw, r.flops);
        out += buf;
    }
    return out;
}

MetricsSeries parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsCsvHeader)
        throw io_error("metrics CSV header mismatch");
    MetricsSeries series;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricsRow r;
        unsigned nl = 0, nr = 0;
        int got = std::sscanf(line.c_str(),
                              "%" SCNu64 ",%lg,%lg,%lg,%lg,%u,%u,%" SCNu64 ",%" SCNu64 ",%" SCNu64
                              ",%lg,%lg",
                              &r.round, &r.loss_half, &r.loss_full, &r.top1_half, &r.top1_full,
                              &nl, &nr, &r.decoded_bits_half, &r.decoded_bits_full,
                              &r.dropped_bits, &r.comm_mw, &r.flops);
        if (got != 12) throw io_error("malformed metrics CSV row: " + line);
        r.n_left = nl;
        r.n_right = nr;
        series.rows.push_back(r);
    }
    return series;
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(contents.data(), std::streamsize(contents.size()));
    if (!out) throw io_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace slimfl::runner
