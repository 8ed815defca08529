#pragma once

#include <span>
#include <vector>

#include "ncens/matrix.hpp"

namespace ncens {

struct PredictionRecord {
    std::vector<double> probs;
    std::size_t predicted = 0;  // argmax, lowest index on ties
    double confidence = 0.0;    // probs[predicted]
    std::size_t true_label = 0;
};

struct BinStats {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double accuracy = 0.0;    // 0 when empty
    double confidence = 0.0;  // 0 when empty
};

// Q equal-width confidence bins over [0,1]. Half-open [lo, hi); confidence
// exactly 1.0 lands in the top bin.
struct CalibrationBins {
    std::size_t bin_count = 0;
    std::size_t total = 0;
    std::vector<BinStats> bins;
};

enum class EceWeighting {
    Standard,  // |C_i| / n
    Paper,     // |C_i| / Q
};

struct ClassCalibrationRow {
    std::size_t class_index = 0;
    std::size_t count = 0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
};

struct EvaluationReport {
    double accuracy = 0.0;
    double ece = 0.0;
    EceWeighting weighting = EceWeighting::Standard;
    CalibrationBins bins;
    std::vector<std::size_t> histogram;  // per-bin prediction counts
    std::vector<ClassCalibrationRow> per_class;
    double avg_class_gap = 0.0;
};

std::vector<PredictionRecord> make_records(const Matrix& probs,
                                           std::span<const std::size_t> labels);

CalibrationBins bin_predictions(const std::vector<PredictionRecord>& records,
                                std::size_t bin_count);

double ece(const CalibrationBins& bins, EceWeighting weighting = EceWeighting::Standard);

struct ReliabilityRow {
    double bin_mid = 0.0;
    double accuracy = 0.0;
    double confidence = 0.0;
    std::size_t count = 0;
};

// One row per bin, empty bins included.
std::vector<ReliabilityRow> reliability_rows(const CalibrationBins& bins);

struct PerClassReport {
    std::vector<ClassCalibrationRow> rows;
    double avg_class_gap = 0.0;  // mean |conf - acc| over populated classes
};

PerClassReport per_class_report(const std::vector<PredictionRecord>& records,
                                std::size_t class_count);

// avg_class_gap from already-aggregated (accuracy, confidence) pairs; the
// per-class table arithmetic without needing raw records.
double avg_class_gap(const std::vector<std::pair<double, double>>& acc_conf_pairs);

EvaluationReport evaluate(const Matrix& probs, std::span<const std::size_t> labels,
                          std::size_t bin_count, std::size_t class_count,
                          EceWeighting weighting = EceWeighting::Standard);

}  // namespace ncens
