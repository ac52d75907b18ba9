#include "astroloc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace astroloc {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

double percentile(std::vector<double> values, double q) {
    if (values.empty()) raise(ErrorCode::precondition, "percentile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) raise(ErrorCode::precondition, "percentile q must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
    if (lo == hi) return values[lo];
    const double w = h - static_cast<double>(lo);
    return values[lo] * (1.0 - w) + values[hi] * w;
}

json recall_report_to_json(const RecallReport& report) {
    json recall = json::object();
    for (const auto& [n, pct] : report.recall_pct) recall[std::to_string(n)] = pct;
    json per_query = json::array();
    for (std::size_t i = 0; i < report.per_query_top.size(); ++i) {
        json hits = json::array();
        for (const SearchHit& h : report.per_query_top[i])
            hits.push_back({{"base_id", h.base_id}, {"similarity", h.similarity}});
        per_query.push_back({{"query_id", report.query_ids[i]}, {"top", hits}});
    }
    json out = {{"ns", report.ns},
                {"recall_pct", recall},
                {"num_queries", report.num_queries},
                {"num_db_base", report.num_db_base},
                {"num_db_entries", report.num_db_entries},
                {"index_bytes", report.index_bytes},
                {"per_query", per_query}};
    if (report.latency) {
        out["latency"] = {{"mean_us", report.latency->mean_us},
                          {"p95_us", report.latency->p95_us}};
    }
    return out;
}

RecallReport recall_report_from_json(const json& j) {
    RecallReport report;
    try {
        report.ns = j.at("ns").get<std::vector<int>>();
        for (const auto& [key, val] : j.at("recall_pct").items())
            report.recall_pct[std::stoi(key)] = val.get<double>();
        report.num_queries = j.at("num_queries").get<std::size_t>();
        report.num_db_base = j.at("num_db_base").get<std::size_t>();
        report.num_db_entries = j.at("num_db_entries").get<std::size_t>();
        report.index_bytes = j.at("index_bytes").get<std::size_t>();
        for (const auto& pq : j.at("per_query")) {
            report.query_ids.push_back(pq.at("query_id").get<std::string>());
            std::vector<SearchHit> hits;
            for (const auto& h : pq.at("top"))
                hits.push_back({h.at("base_id").get<std::string>(),
                                h.at("similarity").get<double>()});
            report.per_query_top.push_back(std::move(hits));
        }
        if (j.contains("latency")) {
            LatencyStats stats;
            stats.mean_us = j["latency"].at("mean_us").get<double>();
            stats.p95_us = j["latency"].at("p95_us").get<double>();
            report.latency = stats;
        }
    } catch (const json::exception& e) {
        raise(ErrorCode::bad_metadata, std::string("recall report JSON: ") + e.what());
    }
    return report;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot open for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) raise(ErrorCode::io_error, "short write: " + path.string());
}

std::string recall_csv(const RecallReport& report) {
    std::string out = "N,recall_pct\n";
    for (const int n : report.ns)
        out += std::to_string(n) + "," + fmt_double(report.recall_pct.at(n)) + "\n";
    return out;
}

std::string latency_csv(const RecallReport& report) {
    if (!report.latency) raise(ErrorCode::precondition, "report carries no latency data");
    std::string out = "query_id,micros\n";
    for (std::size_t i = 0; i < report.query_ids.size(); ++i)
        out += report.query_ids[i] + "," + fmt_double(report.latency->per_query_us[i]) + "\n";
    return out;
}

std::string loss_csv(const std::vector<LossHistoryRow>& history) {
    std::string out = "iteration,pair_loss,mum_loss,total\n";
    for (const LossHistoryRow& row : history) {
        out += std::to_string(row.iteration) + "," + fmt_double(row.pair_loss) + "," +
               fmt_double(row.mum_loss) + "," + fmt_double(row.total) + "\n";
    }
    return out;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           bool log_x) {
    constexpr int W = 720, H = 440;
    constexpr int ML = 70, MR = 30, MT = 50, MB = 60;
    constexpr int PW = W - ML - MR, PH = H - MT - MB;
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Series& s : series) {
        for (double x : s.x) {
            const double v = log_x ? std::log10(std::max(x, 1e-12)) : x;
            xmin = std::min(xmin, v), xmax = std::max(xmax, v);
        }
        for (double y : s.y) ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    if (xmin > xmax) xmin = 0, xmax = 1;
    if (ymin > ymax) ymin = 0, ymax = 1;
    if (xmax - xmin < 1e-12) xmax = xmin + 1;
    if (ymax - ymin < 1e-12) ymax = ymin + 1;

    auto px = [&](double x) {
        const double v = log_x ? std::log10(std::max(x, 1e-12)) : x;
        return ML + (v - xmin) / (xmax - xmin) * PW;
    };
    auto py = [&](double y) { return MT + PH - (y - ymin) / (ymax - ymin) * PH; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\" "
           "font-family=\"sans-serif\">"
        << xml_escape(title) << "</text>\n";
    svg << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << PW << "\" height=\"" << PH
        << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (int t = 0; t <= 5; ++t) {
        const double fy = ymin + (ymax - ymin) * t / 5.0;
        const double yy = py(fy);
        svg << "<line x1=\"" << ML << "\" y1=\"" << yy << "\" x2=\"" << W - MR << "\" y2=\"" << yy
            << "\" stroke=\"#ddd\"/>\n";
        char lbl[32];
        std::snprintf(lbl, sizeof(lbl), "%.4g", fy);
        svg << "<text x=\"" << ML - 6 << "\" y=\"" << yy + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << lbl
            << "</text>\n";
        const double fxv = xmin + (xmax - xmin) * t / 5.0;
        const double fx = log_x ? std::pow(10.0, fxv) : fxv;
        const double xx = ML + static_cast<double>(PW) * t / 5.0;
        std::snprintf(lbl, sizeof(lbl), "%.4g", fx);
        svg << "<text x=\"" << xx << "\" y=\"" << MT + PH + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << lbl
            << "</text>\n";
    }
    svg << "<text x=\"" << ML + PW / 2 << "\" y=\"" << H - 14
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
        << xml_escape(x_label) << "</text>\n";
    svg << "<text x=\"18\" y=\"" << MT + PH / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\""
           "rotate(-90 18 "
        << MT + PH / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % 5];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.7\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            svg << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
        svg << "\"/>\n";
        svg << "<text x=\"" << ML + 10 << "\" y=\"" << MT + 16 + 16 * s << "\" font-size=\"12\" "
            << "font-family=\"sans-serif\" fill=\"" << color << "\">" << xml_escape(series[s].name)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string recall_svg(const RecallReport& report) {
    Series s;
    s.name = "recall@N";
    for (const int n : report.ns) {
        s.x.push_back(n);
        s.y.push_back(report.recall_pct.at(n));
    }
    return svg_line_chart("Recall vs N", "N", "recall (%)", {s}, true);
}

std::string loss_svg(const std::vector<LossHistoryRow>& history) {
    Series pair{"pair_loss", {}, {}}, mum{"mum_loss", {}, {}}, total{"total", {}, {}};
    for (const LossHistoryRow& row : history) {
        const double it = static_cast<double>(row.iteration);
        pair.x.push_back(it), pair.y.push_back(row.pair_loss);
        mum.x.push_back(it), mum.y.push_back(row.mum_loss);
        total.x.push_back(it), total.y.push_back(row.total);
    }
    return svg_line_chart("Training loss", "iteration", "loss", {pair, mum, total});
}

}  // namespace astroloc
