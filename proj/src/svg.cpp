#include "ncens/svg.hpp"

#include <algorithm>
#include <sstream>

namespace ncens {

namespace {

struct Panel {
    double x0, y0, w, h;  // plot area in svg coordinates
};

void rect(std::ostringstream& out, double x, double y, double w, double h,
          const char* fill, const char* extra = "") {
    out << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
        << h << "\" fill=\"" << fill << "\"" << extra << "/>\n";
}

void text(std::ostringstream& out, double x, double y, const std::string& s,
          const char* anchor = "middle", int size = 11) {
    out << "  <text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
        << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s
        << "</text>\n";
}

void axes(std::ostringstream& out, const Panel& p, const std::string& title) {
    out << "  <line x1=\"" << p.x0 << "\" y1=\"" << p.y0 + p.h << "\" x2=\"" << p.x0 + p.w
        << "\" y2=\"" << p.y0 + p.h << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << p.x0 << "\" y1=\"" << p.y0 << "\" x2=\"" << p.x0 << "\" y2=\""
        << p.y0 + p.h << "\" stroke=\"black\"/>\n";
    text(out, p.x0 + p.w / 2, p.y0 - 8, title);
}

}  // namespace

std::string render_report_svg(const EvaluationReport& report) {
    const std::size_t q = report.bins.bin_count;
    const Panel hist{50, 40, 320, 220};
    const Panel rel{440, 40, 320, 220};

    std::ostringstream out;
    out.precision(12);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"810\" height=\"310\" "
           "viewBox=\"0 0 810 310\">\n";
    out << "  <rect x=\"0\" y=\"0\" width=\"810\" height=\"310\" fill=\"white\"/>\n";

    axes(out, hist, "Prediction distribution");
    std::size_t max_count = 1;
    for (std::size_t c : report.histogram) max_count = std::max(max_count, c);
    const double bw_h = hist.w / static_cast<double>(q);
    for (std::size_t i = 0; i < q; ++i) {
        const double frac =
            static_cast<double>(report.histogram[i]) / static_cast<double>(max_count);
        const double bar = frac * hist.h;
        rect(out, hist.x0 + static_cast<double>(i) * bw_h + 1, hist.y0 + hist.h - bar,
             bw_h - 2, bar, "#4878a8",
             (" data-count=\"" + std::to_string(report.histogram[i]) + "\"").c_str());
    }

    axes(out, rel, "Reliability diagram");
    // diagonal = perfect calibration
    out << "  <line x1=\"" << rel.x0 << "\" y1=\"" << rel.y0 + rel.h << "\" x2=\""
        << rel.x0 + rel.w << "\" y2=\"" << rel.y0 << "\" stroke=\"#999999\" "
           "stroke-dasharray=\"4 3\"/>\n";
    const double bw_r = rel.w / static_cast<double>(q);
    const auto rows = reliability_rows(report.bins);
    for (std::size_t i = 0; i < q; ++i) {
        const double x = rel.x0 + static_cast<double>(i) * bw_r;
        std::ostringstream acc_s, con_s;
        acc_s.precision(12);
        con_s.precision(12);
        acc_s << rows[i].accuracy;
        con_s << rows[i].confidence;
        rect(out, x + 1, rel.y0 + rel.h - rows[i].accuracy * rel.h, bw_r / 2 - 1,
             rows[i].accuracy * rel.h, "#4878a8",
             (" data-acc=\"" + acc_s.str() + "\"").c_str());
        rect(out, x + bw_r / 2, rel.y0 + rel.h - rows[i].confidence * rel.h, bw_r / 2 - 1,
             rows[i].confidence * rel.h, "#d08040",
             (" data-con=\"" + con_s.str() + "\"").c_str());
    }

    std::ostringstream caption;
    caption.precision(4);
    caption << "accuracy " << report.accuracy << ", ECE " << report.ece;
    text(out, 405, 295, caption.str());
    out << "</svg>\n";
    return out.str();
}

}  // namespace ncens
