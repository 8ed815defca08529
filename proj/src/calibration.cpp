#include "ncens/calibration.hpp"

#include <cmath>

#include "ncens/errors.hpp"

namespace ncens {

std::vector<PredictionRecord> make_records(const Matrix& probs,
                                           std::span<const std::size_t> labels) {
    if (probs.rows != labels.size())
        throw ShapeError("make_records: probs rows != labels length");
    std::vector<PredictionRecord> records;
    records.reserve(probs.rows);
    for (std::size_t r = 0; r < probs.rows; ++r) {
        PredictionRecord rec;
        const auto row = probs.row(r);
        rec.probs.assign(row.begin(), row.end());
        rec.predicted = 0;
        for (std::size_t k = 1; k < rec.probs.size(); ++k)
            if (rec.probs[k] > rec.probs[rec.predicted]) rec.predicted = k;
        rec.confidence = rec.probs[rec.predicted];
        rec.true_label = labels[r];
        records.push_back(std::move(rec));
    }
    return records;
}

CalibrationBins bin_predictions(const std::vector<PredictionRecord>& records,
                                std::size_t bin_count) {
    if (bin_count == 0) throw ConfigError("bin count must be >= 1");

    CalibrationBins out;
    out.bin_count = bin_count;
    out.total = records.size();
    out.bins.resize(bin_count);
    const double q = static_cast<double>(bin_count);
    for (std::size_t i = 0; i < bin_count; ++i) {
        out.bins[i].lo = static_cast<double>(i) / q;
        out.bins[i].hi = static_cast<double>(i + 1) / q;
    }

    for (const auto& rec : records) {
        auto idx = static_cast<std::size_t>(rec.confidence * q);
        if (idx >= bin_count) idx = bin_count - 1;  // confidence == 1.0
        auto& bin = out.bins[idx];
        ++bin.count;
        bin.confidence += rec.confidence;
        if (rec.predicted == rec.true_label) bin.accuracy += 1.0;
    }
    for (auto& bin : out.bins) {
        if (bin.count > 0) {
            bin.accuracy /= static_cast<double>(bin.count);
            bin.confidence /= static_cast<double>(bin.count);
        }
    }
    return out;
}

double ece(const CalibrationBins& bins, EceWeighting weighting) {
    if (bins.total == 0) throw EmptyInputError("ece: no records");
    const double denom = weighting == EceWeighting::Standard
                             ? static_cast<double>(bins.total)
                             : static_cast<double>(bins.bin_count);
    double sum = 0.0;
    for (const auto& bin : bins.bins)
        sum += static_cast<double>(bin.count) / denom * std::abs(bin.accuracy - bin.confidence);
    return sum;
}

std::vector<ReliabilityRow> reliability_rows(const CalibrationBins& bins) {
    std::vector<ReliabilityRow> rows;
    rows.reserve(bins.bin_count);
    for (std::size_t i = 0; i < bins.bin_count; ++i) {
        const auto& bin = bins.bins[i];
        rows.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(bins.bin_count),
                        bin.accuracy, bin.confidence, bin.count});
    }
    return rows;
}

PerClassReport per_class_report(const std::vector<PredictionRecord>& records,
                                std::size_t class_count) {
    if (class_count == 0) throw ConfigError("class count must be >= 1");
    for (const auto& rec : records)
        if (rec.true_label >= class_count)
            throw IndexError("per_class_report: label out of range");

    PerClassReport report;
    report.rows.resize(class_count);
    for (std::size_t c = 0; c < class_count; ++c) report.rows[c].class_index = c;
    for (const auto& rec : records) {
        auto& row = report.rows[rec.true_label];
        ++row.count;
        row.mean_confidence += rec.confidence;
        if (rec.predicted == rec.true_label) row.accuracy += 1.0;
    }
    std::vector<std::pair<double, double>> pairs;
    for (auto& row : report.rows) {
        if (row.count > 0) {
            row.accuracy /= static_cast<double>(row.count);
            row.mean_confidence /= static_cast<double>(row.count);
            pairs.emplace_back(row.accuracy, row.mean_confidence);
        }
    }
    report.avg_class_gap = pairs.empty() ? 0.0 : avg_class_gap(pairs);
    return report;
}

double avg_class_gap(const std::vector<std::pair<double, double>>& acc_conf_pairs) {
    if (acc_conf_pairs.empty()) throw EmptyInputError("avg_class_gap: no classes");
    double sum = 0.0;
    for (const auto& [acc, conf] : acc_conf_pairs) sum += std::abs(conf - acc);
    return sum / static_cast<double>(acc_conf_pairs.size());
}

EvaluationReport evaluate(const Matrix& probs, std::span<const std::size_t> labels,
                          std::size_t bin_count, std::size_t class_count,
                          EceWeighting weighting) {
    if (probs.rows == 0) throw EmptyInputError("evaluate: no predictions");
    const auto records = make_records(probs, labels);

    EvaluationReport report;
    report.weighting = weighting;
    report.bins = bin_predictions(records, bin_count);
    report.ece = ece(report.bins, weighting);
    for (const auto& bin : report.bins.bins) report.histogram.push_back(bin.count);
    const auto per_class = per_class_report(records, class_count);
    report.per_class = per_class.rows;
    report.avg_class_gap = per_class.avg_class_gap;

    std::size_t correct = 0;
    for (const auto& rec : records)
        if (rec.predicted == rec.true_label) ++correct;
    report.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
    return report;
}

}  // namespace ncens
