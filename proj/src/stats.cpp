#include "pneumoseg/stats.hpp"

#include <cstdio>
#include <sstream>

namespace pneumoseg {

StatsReport dataset_stats(const std::vector<StatsRecord>& records) {
    StatsReport r;
    for (const StatsRecord& rec : records) {
        StatsCell& sex_cell = (rec.sex == Sex::kFemale)  ? r.female
                              : (rec.sex == Sex::kMale) ? r.male
                                                        : r.unknown_sex;
        StatsCell& view_cell = (rec.view == ViewPosition::kAP)   ? r.ap
                               : (rec.view == ViewPosition::kPA) ? r.pa
                                                                 : r.unknown_view;
        if (rec.has_pneumothorax) {
            ++sex_cell.positive;
            ++view_cell.positive;
            ++r.positives;
            if (rec.annotation_count > 1) {
                ++r.multi_mask;
            } else {
                ++r.single_mask;
            }
        } else {
            ++sex_cell.negative;
            ++view_cell.negative;
            ++r.negatives;
        }
        ++r.total;
    }
    return r;
}

namespace {

double pct(int part, int whole) {
    return whole > 0 ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0;
}

void table_row(std::ostringstream& os, const char* attr, const char* value,
               const StatsCell& c, int total) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s %-8s %10d (%5.1f%%) %10d (%5.1f%%) %10d (%5.1f%%)\n",
                  attr, value, c.positive, pct(c.positive, c.total()), c.negative,
                  pct(c.negative, c.total()), c.total(), pct(c.total(), total));
    os << buf;
}

}  // namespace

std::string render_stats_table(const StatsReport& r) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s %-8s %19s %19s %19s\n", "Attribute", "Value",
                  "Pneumothorax", "Healthy", "Total");
    os << buf;
    table_row(os, "Gender", "Female", r.female, r.total);
    table_row(os, "Gender", "Male", r.male, r.total);
    if (r.unknown_sex.total() > 0) table_row(os, "Gender", "unknown", r.unknown_sex, r.total);
    table_row(os, "ViewPosition", "AP", r.ap, r.total);
    table_row(os, "ViewPosition", "PA", r.pa, r.total);
    if (r.unknown_view.total() > 0) table_row(os, "ViewPosition", "unknown", r.unknown_view, r.total);
    os << "\n";
    os << "Samples:            " << r.total << "\n";
    os << "Positive cases:     " << r.positives << "\n";
    os << "Negative cases:     " << r.negatives << "\n";
    os << "Single-mask cases:  " << r.single_mask << "\n";
    os << "Multi-mask cases:   " << r.multi_mask << "\n";
    return os.str();
}

std::string render_stats_csv(const StatsReport& r) {
    std::ostringstream os;
    os << "attribute,value,pneumothorax,healthy,total\n";
    auto row = [&os](const char* a, const char* v, const StatsCell& c) {
        os << a << ',' << v << ',' << c.positive << ',' << c.negative << ',' << c.total() << '\n';
    };
    row("gender", "female", r.female);
    row("gender", "male", r.male);
    row("gender", "unknown", r.unknown_sex);
    row("view_position", "ap", r.ap);
    row("view_position", "pa", r.pa);
    row("view_position", "unknown", r.unknown_view);
    os << "summary,positives," << r.positives << ",," << "\n";
    os << "summary,negatives," << r.negatives << ",," << "\n";
    os << "summary,single_mask," << r.single_mask << ",," << "\n";
    os << "summary,multi_mask," << r.multi_mask << ",," << "\n";
    os << "summary,total," << r.total << ",," << "\n";
    return os.str();
}

}  // namespace pneumoseg
