#include "volseg/metrics.hpp"

#include <fstream>
#include <limits>

#include <json.hpp>

namespace volseg {

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& truth) {
    if (!(pred.dims == truth.dims))
        throw param_error("confusion: prediction and truth dims differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const bool p = pred.labels[i] != 0, t = truth.labels[i] != 0;
        if (p && t) ++c.tp;
        else if (!p && !t) ++c.tn;
        else if (p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

MetricReport compute_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw param_error("compute_metrics: empty confusion counts");
    MetricReport r;
    r.acc = static_cast<double>(c.tp + c.tn) / c.total();
    if (c.tp + c.fn > 0) {
        r.sen = static_cast<double>(c.tp) / (c.tp + c.fn);
    } else {
        r.sen = 1.0;
        r.degenerate = true;
    }
    if (c.tn + c.fp > 0) {
        r.spe = static_cast<double>(c.tn) / (c.tn + c.fp);
    } else {
        r.spe = 1.0;
        r.degenerate = true;
    }
    if (2 * c.tp + c.fp + c.fn > 0) {
        r.dsc = static_cast<double>(2 * c.tp) / (2 * c.tp + c.fp + c.fn);
    } else {
        r.dsc = 1.0;
        r.degenerate = true;
    }
    return r;
}

Summary aggregate(const std::vector<DatasetGroup>& groups) {
    if (groups.empty()) throw param_error("aggregate: no groups");
    Summary s;
    for (const auto& g : groups) {
        if (g.reports.empty())
            throw param_error("aggregate: group '" + g.name + "' has no reports");
        SummaryRow row{g.name, 0, 0, 0, 0};
        for (const auto& r : g.reports) {
            row.acc += r.acc;
            row.sen += r.sen;
            row.spe += r.spe;
            row.dsc += r.dsc;
        }
        const double n = static_cast<double>(g.reports.size());
        row.acc /= n, row.sen /= n, row.spe /= n, row.dsc /= n;
        s.groups.push_back(row);
    }
    SummaryRow avg{"average", 0, 0, 0, 0};
    for (const auto& row : s.groups) {
        avg.acc += row.acc;
        avg.sen += row.sen;
        avg.spe += row.spe;
        avg.dsc += row.dsc;
    }
    const double n = static_cast<double>(s.groups.size());
    avg.acc /= n, avg.sen /= n, avg.spe /= n, avg.dsc /= n;
    s.average = avg;
    return s;
}

void write_metrics_csv(const std::vector<MetricReport>& reports,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("write_metrics_csv: cannot open " + path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "volume_id,acc,sen,spe,dsc\n";
    for (const auto& r : reports)
        out << r.volume_id << ',' << r.acc << ',' << r.sen << ',' << r.spe << ','
            << r.dsc << '\n';
    if (!out) throw data_error("write_metrics_csv: write failed for " + path.string());
}

void write_summary_json(const Summary& s, const std::filesystem::path& path) {
    nlohmann::json j;
    j["groups"] = nlohmann::json::array();
    for (const auto& row : s.groups)
        j["groups"].push_back({{"name", row.name},
                               {"acc", row.acc},
                               {"sen", row.sen},
                               {"spe", row.spe},
                               {"dsc", row.dsc}});
    j["average"] = {{"acc", s.average.acc},
                    {"sen", s.average.sen},
                    {"spe", s.average.spe},
                    {"dsc", s.average.dsc}};
    std::ofstream out(path);
    if (!out) throw data_error("write_summary_json: cannot open " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw data_error("write_summary_json: write failed for " + path.string());
}

}  // namespace volseg
