#ifndef VOLSEG_METRICS_HPP
#define VOLSEG_METRICS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
};

struct MetricReport {
    std::string volume_id;
    double acc = 0, sen = 0, spe = 0, dsc = 0;
    // set when a denominator was empty and the 1.0 convention kicked in
    bool degenerate = false;
};

struct DatasetGroup {
    std::string name;
    std::vector<MetricReport> reports;
};

struct SummaryRow {
    std::string name;
    double acc = 0, sen = 0, spe = 0, dsc = 0;
};

struct Summary {
    std::vector<SummaryRow> groups;
    SummaryRow average;  // unweighted mean of the group means
};

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& truth);

// ACC = (TP+TN)/total, SEN = TP/(TP+FN), SPE = TN/(TN+FP),
// DSC = 2TP/(2TP+FP+FN). An empty denominator scores 1.0 and flags the
// report as degenerate.
MetricReport compute_metrics(const ConfusionCounts& c);

Summary aggregate(const std::vector<DatasetGroup>& groups);

void write_metrics_csv(const std::vector<MetricReport>& reports,
                       const std::filesystem::path& path);
void write_summary_json(const Summary& s, const std::filesystem::path& path);

}  // namespace volseg

#endif
