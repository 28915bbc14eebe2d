#include "pfedgrp/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pfedgrp/metrics.hpp"

namespace pfedgrp {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

struct MethodStats {
    std::vector<double> aa_values;
    std::vector<double> afm_values;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string render_iaa_svg(const std::vector<RunRecord>& records) {
    // Mean IAA per round per method; one polyline each.
    std::map<std::string, std::vector<std::vector<double>>> per_method;
    size_t max_rounds = 0;
    for (const RunRecord& rec : records) {
        per_method[rec.method].push_back(rec.iaa);
        max_rounds = std::max(max_rounds, rec.iaa.size());
    }
    const double width = 800.0, height = 480.0;
    const double ml = 60.0, mr = 160.0, mt = 30.0, mb = 50.0;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    auto x_of = [&](size_t round) {
        if (max_rounds <= 1) return ml + plot_w / 2.0;
        return ml + plot_w * static_cast<double>(round) / static_cast<double>(max_rounds - 1);
    };
    auto y_of = [&](double iaa) { return mt + plot_h * (1.0 - iaa); };

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
        << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + plot_h << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        const double frac = static_cast<double>(tick) / 5.0;
        const double y = y_of(frac);
        char label[16];
        std::snprintf(label, sizeof(label), "%.1f", frac);
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
            << "\" font-size=\"12\" text-anchor=\"end\">" << label << "</text>\n";
        svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
            << "\" stroke=\"black\"/>\n";
    }
    svg << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 12
        << "\" font-size=\"13\" text-anchor=\"middle\">round</text>\n";
    svg << "<text x=\"16\" y=\"" << mt + plot_h / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << mt + plot_h / 2 << ")\">IAA</text>\n";

    size_t color = 0;
    double legend_y = mt + 10.0;
    for (const auto& [method, series_list] : per_method) {
        std::vector<double> mean_series;
        for (size_t r = 0; r < max_rounds; ++r) {
            double sum = 0.0;
            size_t n = 0;
            for (const std::vector<double>& series : series_list) {
                if (r < series.size()) {
                    sum += series[r];
                    ++n;
                }
            }
            if (n > 0) mean_series.push_back(sum / static_cast<double>(n));
        }
        const char* stroke = kPalette[color % (sizeof(kPalette) / sizeof(kPalette[0]))];
        svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
        for (size_t r = 0; r < mean_series.size(); ++r) {
            if (r > 0) svg << " ";
            svg << x_of(r) << "," << y_of(mean_series[r]);
        }
        svg << "\"/>\n";
        svg << "<line x1=\"" << ml + plot_w + 12 << "\" y1=\"" << legend_y << "\" x2=\""
            << ml + plot_w + 36 << "\" y2=\"" << legend_y << "\" stroke=\"" << stroke
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << ml + plot_w + 42 << "\" y=\"" << legend_y + 4
            << "\" font-size=\"12\">" << method << "</text>\n";
        legend_y += 18.0;
        ++color;
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_results(const std::vector<RunRecord>& records, const std::string& out_dir) {
    if (records.empty()) throw ContractViolation("emit_results: no records");
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    {
        std::ofstream csv(dir / "iaa.csv");
        if (!csv) throw ParseError(out_dir + ": cannot write iaa.csv");
        csv << "method,scenario,seed,round,iaa\n";
        for (const RunRecord& rec : records) {
            for (size_t r = 0; r < rec.iaa.size(); ++r) {
                csv << rec.method << "," << rec.scenario << "," << rec.seed << "," << (r + 1)
                    << "," << format_double(rec.iaa[r]) << "\n";
            }
        }
    }

    {
        nlohmann::json doc;
        std::map<std::string, MethodStats> stats;
        nlohmann::json runs = nlohmann::json::array();
        for (const RunRecord& rec : records) {
            const MetricSummary s = summarize(rec.iaa);
            runs.push_back({{"method", rec.method},
                            {"scenario", rec.scenario},
                            {"seed", rec.seed},
                            {"aa", s.aa},
                            {"afm", s.afm}});
            stats[rec.method].aa_values.push_back(s.aa);
            stats[rec.method].afm_values.push_back(s.afm);
        }
        doc["runs"] = runs;
        nlohmann::json methods;
        for (const auto& [name, st] : stats) {
            methods[name] = {{"seeds", st.aa_values.size()},
                             {"mean_aa", mean_of(st.aa_values)},
                             {"stddev_aa", sample_stddev(st.aa_values)},
                             {"mean_afm", mean_of(st.afm_values)},
                             {"stddev_afm", sample_stddev(st.afm_values)}};
        }
        doc["methods"] = methods;
        std::ofstream json_out(dir / "summary.json");
        if (!json_out) throw ParseError(out_dir + ": cannot write summary.json");
        json_out << doc.dump(2) << "\n";
    }

    {
        std::ofstream svg(dir / "iaa.svg");
        if (!svg) throw ParseError(out_dir + ": cannot write iaa.svg");
        svg << render_iaa_svg(records);
    }
}

std::vector<RunRecord> parse_iaa_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line) || line != "method,scenario,seed,round,iaa") {
        throw ParseError(path + ": bad or missing CSV header");
    }
    std::map<std::tuple<std::string, std::string, uint64_t>, RunRecord> by_run;
    std::vector<std::tuple<std::string, std::string, uint64_t>> order;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string method, scenario, seed_str, round_str, iaa_str;
        if (!std::getline(ss, method, ',') || !std::getline(ss, scenario, ',') ||
            !std::getline(ss, seed_str, ',') || !std::getline(ss, round_str, ',') ||
            !std::getline(ss, iaa_str)) {
            throw ParseError(path + ": malformed row at line " + std::to_string(line_no));
        }
        const auto key = std::make_tuple(method, scenario,
                                         static_cast<uint64_t>(std::stoull(seed_str)));
        if (by_run.count(key) == 0) {
            RunRecord rec;
            rec.method = method;
            rec.scenario = scenario;
            rec.seed = std::get<2>(key);
            by_run[key] = rec;
            order.push_back(key);
        }
        by_run[key].iaa.push_back(std::stod(iaa_str));
    }
    std::vector<RunRecord> records;
    records.reserve(order.size());
    for (const auto& key : order) records.push_back(by_run[key]);
    return records;
}

}  // namespace pfedgrp
