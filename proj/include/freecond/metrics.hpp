#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "freecond/errors.hpp"
#include "freecond/grid.hpp"
#include "freecond/util.hpp"

namespace freecond {

/*===================================== pixel metrics =====================================*/

// |A ∩ B| / |A ∪ B| on binary masks.
inline double iou(const MaskGrid& a, const MaskGrid& b) {
    require_binary(a, "iou: first mask");
    require_binary(b, "iou: second mask");
    if (a.height != b.height || a.width != b.width)
        throw DimensionError("iou: " + a.shape_str() + " vs " + b.shape_str());
    double inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        double va = a.values[i], vb = b.values[i];
        inter += va * vb;
        uni += (va + vb > 0.0) ? 1.0 : 0.0;
    }
    if (uni == 0.0) throw DomainError("iou: empty union (both masks all-zero)");
    return inter / uni;
}

// 10*log10(max^2 / MSE); identical inputs report +infinity as the sentinel.
inline double psnr(const LatentGrid& a, const LatentGrid& b, double max_value) {
    if (!a.same_shape(b))
        throw DimensionError("psnr: " + a.shape_str() + " vs " + b.shape_str());
    if (!(max_value > 0.0))
        throw DomainError("psnr: max_value must be > 0, got " + std::to_string(max_value));
    double se = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        double d = a.values[i] - b.values[i];
        se += d * d;
    }
    double mse = se / static_cast<double>(a.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / mse);
}

struct RegionMetrics {
    double psnr_outside = 0.0;      // background preservation, over the (1-M) support
    double changed_fraction = 0.0;  // share of inside-M pixels altered beyond the threshold
};

// Splits the comparison at the mask boundary: PSNR outside (did the edit
// leave the background alone?) and changed-pixel fraction inside (did the
// edit actually land?). A pixel counts as changed when any channel moves by
// more than change_threshold.
inline RegionMetrics masked_region_metrics(const LatentGrid& output,
                                           const LatentGrid& reference, const MaskGrid& mask,
                                           double max_value = 1.0,
                                           double change_threshold = 1e-6) {
    if (!output.same_shape(reference))
        throw DimensionError("masked_region_metrics: " + output.shape_str() + " vs " +
                             reference.shape_str());
    if (mask.height != output.height || mask.width != output.width)
        throw DimensionError("masked_region_metrics: mask " + mask.shape_str() + " vs image " +
                             output.shape_str());
    require_binary(mask, "masked_region_metrics: mask");

    double se_out = 0.0;
    long long n_out = 0, n_in = 0, changed = 0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(y, x) == 0.0) {
                for (int c = 0; c < output.channels; ++c) {
                    double d = output.at(c, y, x) - reference.at(c, y, x);
                    se_out += d * d;
                }
                ++n_out;
            } else {
                bool moved = false;
                for (int c = 0; c < output.channels && !moved; ++c)
                    moved = std::abs(output.at(c, y, x) - reference.at(c, y, x)) >
                            change_threshold;
                changed += moved ? 1 : 0;
                ++n_in;
            }
        }
    }
    if (n_out == 0) throw DomainError("masked_region_metrics: empty outside region");
    if (n_in == 0) throw DomainError("masked_region_metrics: empty inside region");

    RegionMetrics rm;
    double mse = se_out / static_cast<double>(n_out * output.channels);
    rm.psnr_outside = (mse == 0.0) ? std::numeric_limits<double>::infinity()
                                   : 10.0 * std::log10(max_value * max_value / mse);
    rm.changed_fraction = static_cast<double>(changed) / static_cast<double>(n_in);
    return rm;
}

/*===================================== score table =====================================*/

inline constexpr const char* kScoreCsvHeader = "sample,method,metric,value";

// Flat score store keyed by (sample, method, metric). Aggregates are always
// recomputed from the rows; nothing derived is cached.
struct ScoreTable {
    struct Row {
        std::string sample, method, metric;
        double value = 0.0;
        std::string provenance;  // "internal" or "external"
        int line = -1;           // source CSV line for external rows
    };

    std::vector<Row> rows;
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;

    void add(Row row) {
        auto key = std::make_tuple(row.sample, row.method, row.metric);
        auto it = index.find(key);
        if (it != index.end()) {
            const Row& prev = rows[it->second];
            auto where = [](const Row& r) {
                return r.line >= 0 ? "line " + std::to_string(r.line) : std::string("internal");
            };
            throw ConflictError("duplicate score for (" + row.sample + ", " + row.method +
                                ", " + row.metric + "): " + where(prev) + " and " + where(row));
        }
        index.emplace(std::move(key), rows.size());
        rows.push_back(std::move(row));
    }

    void add_internal(const std::string& sample, const std::string& method,
                      const std::string& metric, double value) {
        add(Row{sample, method, metric, value, "internal", -1});
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace detail

// Reads rows from CSV text with the exact header sample,method,metric,value
// (no quoting; field values must not contain commas). Rows land in the table
// tagged external. Returns the number of rows added.
inline int ingest_external_scores(const std::string& csv_text, ScoreTable& table) {
    std::istringstream in(csv_text);
    std::string line;
    int line_no = 0, added = 0;
    if (!std::getline(in, line))
        throw ParseError("line 1: empty input, expected header '" +
                         std::string(kScoreCsvHeader) + "'");
    ++line_no;
    if (detail::strip_cr(line) != kScoreCsvHeader)
        throw ParseError("line 1: expected header '" + std::string(kScoreCsvHeader) +
                         "', got '" + detail::strip_cr(line) + "'");
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = detail::strip_cr(line);
        if (stripped.empty()) continue;
        auto fields = detail::split_csv_line(stripped);
        if (fields.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        double value;
        if (!parse_double(fields[3], value))
            throw ParseError("line " + std::to_string(line_no) + ": bad value '" + fields[3] +
                             "'");
        table.add(ScoreTable::Row{fields[0], fields[1], fields[2], value, "external", line_no});
        ++added;
    }
    return added;
}

inline std::string export_scores_csv(const ScoreTable& table) {
    std::string out = kScoreCsvHeader;
    out += '\n';
    for (const auto& r : table.rows) {
        out += r.sample;
        out += ',';
        out += r.method;
        out += ',';
        out += r.metric;
        out += ',';
        out += format_double(r.value);
        out += '\n';
    }
    return out;
}

/*===================================== aggregation =====================================*/

struct AggregateRow {
    std::string method, metric;
    double mean = 0.0;  // over finite values; NaN when no finite value exists
    int count = 0;      // finite values averaged
    int inf_count = 0;  // infinity sentinels, excluded from the mean
};

// Mean per (method, metric) over all samples. Infinity sentinels (perfect
// PSNR) would poison an arithmetic mean, so they are counted separately.
inline std::vector<AggregateRow> aggregate(const ScoreTable& table) {
    std::map<std::pair<std::string, std::string>, AggregateRow> groups;
    for (const auto& r : table.rows) {
        AggregateRow& g = groups[{r.method, r.metric}];
        g.method = r.method;
        g.metric = r.metric;
        if (std::isinf(r.value)) {
            ++g.inf_count;
        } else {
            g.mean += r.value;
            ++g.count;
        }
    }
    std::vector<AggregateRow> out;
    out.reserve(groups.size());
    for (auto& [key, g] : groups) {
        g.mean = g.count > 0 ? g.mean / g.count : std::numeric_limits<double>::quiet_NaN();
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace freecond
