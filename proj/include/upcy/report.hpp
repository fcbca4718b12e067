#pragma once

// CSV and SVG emission for training curves, the relative-improvement plot,
// and the latency-vs-throughput comparison table. SVG is hand-rolled
// (axes, polylines, legend) with fixed number formatting, so identical
// inputs produce byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "upcy/core.hpp"
#include "upcy/servesim.hpp"
#include "upcy/trainer.hpp"

namespace upcy {

struct pairing_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << text;
    if (!f) throw io_error("short write to " + path);
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline std::size_t csv_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw format_error("csv column '" + name + "' not found");
}

}  // namespace detail

// ----------------------------------------------------------------------
// CSV writers
// ----------------------------------------------------------------------

// schema: tokens,lr,ce,aux[,lb_l<i>...,f_l<i>_e<j>...,p_l<i>_e<j>...]
inline void write_metrics_csv(const run_metrics& metrics, const std::string& path) {
    std::ostringstream out;
    out << "tokens,lr,ce,aux";
    const bool moe = !metrics.rows.empty() && !metrics.rows.front().layer_balance.empty();
    if (moe) {
        const auto& first = metrics.rows.front();
        for (std::size_t l = 0; l < first.layer_balance.size(); ++l) out << ",lb_l" << l;
        for (std::size_t l = 0; l < first.layer_f.size(); ++l) {
            for (std::size_t e = 0; e < first.layer_f[l].size(); ++e) {
                out << ",f_l" << l << "_e" << e;
            }
        }
        for (std::size_t l = 0; l < first.layer_p.size(); ++l) {
            for (std::size_t e = 0; e < first.layer_p[l].size(); ++e) {
                out << ",p_l" << l << "_e" << e;
            }
        }
    }
    out << "\n";
    for (const auto& r : metrics.rows) {
        out << r.tokens << ',' << detail::fmt(r.lr) << ',' << detail::fmt(r.ce) << ','
            << detail::fmt(r.aux);
        if (moe) {
            for (const double v : r.layer_balance) out << ',' << detail::fmt(v);
            for (const auto& layer : r.layer_f) {
                for (const double v : layer) out << ',' << detail::fmt(v);
            }
            for (const auto& layer : r.layer_p) {
                for (const double v : layer) out << ',' << detail::fmt(v);
            }
        }
        out << "\n";
    }
    detail::write_text_file(path, out.str());
}

// schema: additional_tokens,core_avg,<task>...
inline void write_eval_csv(const std::vector<std::pair<std::uint64_t, eval_result>>& rows,
                           const std::string& path) {
    if (rows.empty()) throw config_error("write_eval_csv: no rows");
    std::ostringstream out;
    out << "additional_tokens,core_avg";
    for (const auto& name : rows.front().second.task_names) out << ',' << name;
    out << "\n";
    for (const auto& [tokens, res] : rows) {
        out << tokens << ',' << detail::fmt(res.core_avg);
        for (const double a : res.accuracies) out << ',' << detail::fmt(a);
        out << "\n";
    }
    detail::write_text_file(path, out.str());
}

// schema: rps,mean_latency_s,p50,p99,throughput_tok_s
inline void write_sweep_csv(const sweep_result& sweep, const std::string& path) {
    std::ostringstream out;
    out << "rps,mean_latency_s,p50,p99,throughput_tok_s\n";
    for (const auto& p : sweep.points) {
        out << detail::fmt(p.rps) << ',' << detail::fmt(p.mean_latency) << ','
            << detail::fmt(p.p50_latency) << ',' << detail::fmt(p.p99_latency) << ','
            << detail::fmt(p.throughput) << "\n";
    }
    detail::write_text_file(path, out.str());
}

// ----------------------------------------------------------------------
// SVG line charts
// ----------------------------------------------------------------------

struct chart_series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct chart_spec {
    std::string title, x_label, y_label;
    std::vector<chart_series> series;
};

inline std::string render_chart_svg(const chart_spec& chart) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#17becf", "#7f7f7f", "#bcbd22"};
    const double W = 720, H = 480, ml = 70, mr = 160, mt = 40, mb = 55;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : chart.series) {
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + (ymin == 0 ? 1 : std::abs(ymin) * 0.1);
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << chart.title << "</text>\n";

    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << (W - mr) << "\" y2=\""
        << (H - mb) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << (H - mb)
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 5.0;
        const double fy = ymin + (ymax - ymin) * i / 5.0;
        out << "<line x1=\"" << detail::fmt(px(fx), "%.2f") << "\" y1=\"" << (H - mb) << "\" x2=\""
            << detail::fmt(px(fx), "%.2f") << "\" y2=\"" << (H - mb + 5) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << detail::fmt(px(fx), "%.2f") << "\" y=\"" << (H - mb + 20)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::fmt(fx, "%.4g") << "</text>\n";
        out << "<line x1=\"" << (ml - 5) << "\" y1=\"" << detail::fmt(py(fy), "%.2f") << "\" x2=\""
            << ml << "\" y2=\"" << detail::fmt(py(fy), "%.2f") << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << (ml - 8) << "\" y=\"" << detail::fmt(py(fy) + 4, "%.2f")
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::fmt(fy, "%.4g") << "</text>\n";
    }
    out << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"" << (H - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << chart.x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << (mt + (H - mt - mb) / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 18 " << (mt + (H - mt - mb) / 2) << ")\">" << chart.y_label
        << "</text>\n";

    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const auto& s = chart.series[si];
        const char* color = palette[si % (sizeof(palette) / sizeof(palette[0]))];
        if (s.points.size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
            for (const auto& [x, y] : s.points) {
                out << detail::fmt(px(x), "%.2f") << ',' << detail::fmt(py(y), "%.2f") << ' ';
            }
            out << "\"/>\n";
        }
        for (const auto& [x, y] : s.points) {
            out << "<circle cx=\"" << detail::fmt(px(x), "%.2f") << "\" cy=\""
                << detail::fmt(py(y), "%.2f") << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        const double ly = mt + 16.0 * static_cast<double>(si);
        out << "<line x1=\"" << (W - mr + 10) << "\" y1=\"" << ly << "\" x2=\"" << (W - mr + 30)
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << (W - mr + 35) << "\" y=\"" << (ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

inline void write_chart_svg(const chart_spec& chart, const std::string& path) {
    detail::write_text_file(path, render_chart_svg(chart));
}

// ----------------------------------------------------------------------
// figure analogues
// ----------------------------------------------------------------------

// cross-entropy vs tokens, one series per run, read from metrics CSVs
inline void write_ce_curves(const std::vector<std::pair<std::string, std::string>>& name_and_csv,
                            const std::string& svg_path) {
    chart_spec chart;
    chart.title = "Training cross entropy";
    chart.x_label = "tokens";
    chart.y_label = "cross entropy (nats)";
    for (const auto& [name, csv_path] : name_and_csv) {
        const auto rows = detail::read_csv(csv_path);
        if (rows.size() < 2) throw format_error("metrics csv " + csv_path + " has no data rows");
        const std::size_t ct = detail::csv_column(rows[0], "tokens");
        const std::size_t cc = detail::csv_column(rows[0], "ce");
        chart_series s;
        s.name = name;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            s.points.emplace_back(std::stod(rows[i][ct]), std::stod(rows[i][cc]));
        }
        chart.series.push_back(std::move(s));
    }
    write_chart_svg(chart, svg_path);
}

// relative improvement of upcycled over CPT core average at matched budgets
struct relative_point {
    std::uint64_t cpt_tokens = 0;
    std::uint64_t upcycled_tokens = 0;
    double cpt_core = 0;
    double upcycled_core = 0;
    double improvement = 0;
};

inline std::vector<relative_point> relative_improvement_series(const std::string& cpt_eval_csv,
                                                               const std::string& upc_eval_csv) {
    const auto cpt = detail::read_csv(cpt_eval_csv);
    const auto upc = detail::read_csv(upc_eval_csv);
    if (cpt.size() != upc.size() || cpt.size() < 2) {
        throw pairing_error("relative improvement: runs have different milestone counts");
    }
    const std::size_t ct = detail::csv_column(cpt[0], "additional_tokens");
    const std::size_t cc = detail::csv_column(cpt[0], "core_avg");
    const std::size_t ut = detail::csv_column(upc[0], "additional_tokens");
    const std::size_t uc = detail::csv_column(upc[0], "core_avg");
    std::vector<relative_point> out;
    for (std::size_t i = 1; i < cpt.size(); ++i) {
        relative_point p;
        p.cpt_tokens = std::stoull(cpt[i][ct]);
        p.upcycled_tokens = std::stoull(upc[i][ut]);
        p.cpt_core = std::stod(cpt[i][cc]);
        p.upcycled_core = std::stod(upc[i][uc]);
        p.improvement = relative_improvement(p.upcycled_core, p.cpt_core);
        out.push_back(p);
    }
    return out;
}

inline void write_relative_improvement(const std::vector<relative_point>& series,
                                       const std::string& csv_path,
                                       const std::string& svg_path) {
    std::ostringstream out;
    out << "cpt_additional_tokens,upcycled_additional_tokens,cpt_core,upcycled_core,"
           "relative_improvement\n";
    for (const auto& p : series) {
        out << p.cpt_tokens << ',' << p.upcycled_tokens << ',' << detail::fmt(p.cpt_core) << ','
            << detail::fmt(p.upcycled_core) << ',' << detail::fmt(p.improvement) << "\n";
    }
    detail::write_text_file(csv_path, out.str());

    chart_spec chart;
    chart.title = "Upcycling vs CPT, core average";
    chart.x_label = "additional CPT tokens (matched FLOPs)";
    chart.y_label = "relative improvement";
    chart_series s;
    s.name = "upcycled vs cpt";
    for (const auto& p : series) {
        s.points.emplace_back(static_cast<double>(p.cpt_tokens), p.improvement);
    }
    chart.series.push_back(std::move(s));
    write_chart_svg(chart, svg_path);
}

// latency-vs-throughput plot plus the max-throughput table
struct throughput_row {
    std::string model;
    std::size_t devices = 1;
    std::size_t top_k = 0;  // 0 = dense
    double max_throughput = 0;
    bool baseline = false;  // %decrease measured against the preceding baseline
};

inline void write_throughput_table(const std::vector<throughput_row>& rows,
                                   const std::string& csv_path) {
    std::ostringstream out;
    out << "model,devices,top_k,max_throughput_tok_s,pct_decrease\n";
    double baseline = 0;
    for (const auto& r : rows) {
        if (r.baseline) baseline = r.max_throughput;
        out << r.model << ',' << r.devices << ',';
        if (r.top_k == 0) {
            out << "-";
        } else {
            out << r.top_k;
        }
        out << ',' << detail::fmt(r.max_throughput, "%.0f") << ',';
        if (r.baseline || baseline == 0) {
            out << "-";
        } else {
            out << detail::fmt(pct_decrease(baseline, r.max_throughput), "%.0f") << "%";
        }
        out << "\n";
    }
    detail::write_text_file(csv_path, out.str());
}

inline void write_latency_throughput_svg(
    const std::vector<std::pair<std::string, sweep_result>>& sweeps, const std::string& svg_path) {
    chart_spec chart;
    chart.title = "Latency vs throughput";
    chart.x_label = "throughput (tokens/s)";
    chart.y_label = "mean latency (s)";
    for (const auto& [name, sweep] : sweeps) {
        chart_series s;
        s.name = name;
        for (const auto& p : sweep.points) s.points.emplace_back(p.throughput, p.mean_latency);
        chart.series.push_back(std::move(s));
    }
    write_chart_svg(chart, svg_path);
}

}  // namespace upcy
