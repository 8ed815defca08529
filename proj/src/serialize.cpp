#include "ncens/serialize.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ncens/errors.hpp"

namespace ncens {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

std::string activation_name(Activation act) {
    return act == Activation::Relu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw ParseError("unknown activation '" + name + "'");
}

json params_to_obj(const NetworkParams& params) {
    json obj;
    obj["version"] = kSchemaVersion;
    obj["layer_sizes"] = params.layer_sizes;
    obj["activation"] = activation_name(params.activation);
    json weights = json::array();
    for (const auto& w : params.weights) {
        json layer = json::array();
        for (std::size_t r = 0; r < w.rows; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < w.cols; ++c) row.push_back(w(r, c));
            layer.push_back(std::move(row));
        }
        weights.push_back(std::move(layer));
    }
    obj["weights"] = std::move(weights);
    obj["biases"] = params.biases;
    return obj;
}

NetworkParams params_from_obj(const json& obj) {
    if (obj.at("version").get<int>() != kSchemaVersion)
        throw ParseError("unsupported params schema version");
    NetworkParams params;
    params.layer_sizes = obj.at("layer_sizes").get<std::vector<std::size_t>>();
    params.activation = activation_from_name(obj.at("activation").get<std::string>());
    for (const auto& layer : obj.at("weights")) {
        const std::size_t rows = layer.size();
        const std::size_t cols = rows ? layer.at(0).size() : 0;
        Matrix w(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto& row = layer.at(r);
            if (row.size() != cols) throw ParseError("ragged weight matrix");
            for (std::size_t c = 0; c < cols; ++c) w(r, c) = row.at(c).get<double>();
        }
        params.weights.push_back(std::move(w));
    }
    params.biases = obj.at("biases").get<std::vector<std::vector<double>>>();
    if (params.weights.size() + 1 != params.layer_sizes.size() ||
        params.biases.size() != params.weights.size())
        throw ParseError("inconsistent layer structure");
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        if (params.weights[l].rows != params.layer_sizes[l + 1] ||
            params.weights[l].cols != params.layer_sizes[l] ||
            params.biases[l].size() != params.layer_sizes[l + 1])
            throw ParseError("weight shape does not match layer_sizes");
    }
    return params;
}

json parse(const std::string& text, const char* what) {
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded()) throw ParseError(std::string("malformed ") + what + " JSON");
    return obj;
}

}  // namespace

std::string params_to_json(const NetworkParams& params) {
    return params_to_obj(params).dump(2);
}

NetworkParams params_from_json(const std::string& text) {
    return params_from_obj(parse(text, "params"));
}

std::string ensemble_to_json(const Ensemble& ensemble) {
    json obj;
    obj["version"] = kSchemaVersion;
    obj["config"] = {
        {"M", ensemble.config.member_count},
        {"lambda", ensemble.config.lambda},
        {"sgd",
         {{"lr", ensemble.config.sgd.learning_rate},
          {"momentum", ensemble.config.sgd.momentum},
          {"epochs", ensemble.config.sgd.epochs},
          {"batch_size", ensemble.config.sgd.batch_size}}},
        {"member_seeds", ensemble.config.member_seeds},
    };
    json members = json::array();
    for (const auto& m : ensemble.members) members.push_back(params_to_obj(m));
    obj["members"] = std::move(members);
    return obj.dump(2);
}

Ensemble ensemble_from_json(const std::string& text) {
    const json obj = parse(text, "ensemble");
    if (obj.at("version").get<int>() != kSchemaVersion)
        throw ParseError("unsupported ensemble schema version");
    Ensemble ensemble;
    const auto& cfg = obj.at("config");
    ensemble.config.member_count = cfg.at("M").get<std::size_t>();
    ensemble.config.lambda = cfg.at("lambda").get<double>();
    const auto& sgd = cfg.at("sgd");
    ensemble.config.sgd.learning_rate = sgd.at("lr").get<double>();
    ensemble.config.sgd.momentum = sgd.at("momentum").get<double>();
    ensemble.config.sgd.epochs = sgd.at("epochs").get<std::size_t>();
    ensemble.config.sgd.batch_size = sgd.at("batch_size").get<std::size_t>();
    ensemble.config.member_seeds = cfg.at("member_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& m : obj.at("members")) ensemble.members.push_back(params_from_obj(m));
    if (ensemble.members.size() != ensemble.config.member_count)
        throw ParseError("member count does not match config M");
    for (const auto& m : ensemble.members)
        if (m.layer_sizes != ensemble.members.front().layer_sizes)
            throw ParseError("members have differing layer_sizes");
    return ensemble;
}

std::string report_to_json(const EvaluationReport& report) {
    json obj;
    obj["accuracy"] = report.accuracy;
    obj["ece"] = report.ece;
    obj["q"] = report.bins.bin_count;
    obj["weighting"] = report.weighting == EceWeighting::Standard ? "standard" : "paper";
    json bins = json::array();
    for (const auto& bin : report.bins.bins)
        bins.push_back({{"lo", bin.lo},
                        {"hi", bin.hi},
                        {"count", bin.count},
                        {"acc", bin.accuracy},
                        {"con", bin.confidence}});
    obj["bins"] = std::move(bins);
    json per_class = json::array();
    for (const auto& row : report.per_class)
        per_class.push_back({{"class", row.class_index},
                             {"count", row.count},
                             {"acc", row.accuracy},
                             {"conf", row.mean_confidence}});
    obj["per_class"] = std::move(per_class);
    obj["avg_class_gap"] = report.avg_class_gap;
    return obj.dump(2);
}

EvaluationReport report_from_json(const std::string& text) {
    const json obj = parse(text, "metrics");
    EvaluationReport report;
    report.accuracy = obj.at("accuracy").get<double>();
    report.ece = obj.at("ece").get<double>();
    report.weighting = obj.at("weighting").get<std::string>() == "paper"
                           ? EceWeighting::Paper
                           : EceWeighting::Standard;
    report.bins.bin_count = obj.at("q").get<std::size_t>();
    for (const auto& b : obj.at("bins")) {
        BinStats bin;
        bin.lo = b.at("lo").get<double>();
        bin.hi = b.at("hi").get<double>();
        bin.count = b.at("count").get<std::size_t>();
        bin.accuracy = b.at("acc").get<double>();
        bin.confidence = b.at("con").get<double>();
        report.bins.total += bin.count;
        report.bins.bins.push_back(bin);
        report.histogram.push_back(bin.count);
    }
    if (report.bins.bins.size() != report.bins.bin_count)
        throw ParseError("bin list length does not match q");
    for (const auto& r : obj.at("per_class")) {
        ClassCalibrationRow row;
        row.class_index = r.at("class").get<std::size_t>();
        row.count = r.at("count").get<std::size_t>();
        row.accuracy = r.at("acc").get<double>();
        row.mean_confidence = r.at("conf").get<double>();
        report.per_class.push_back(row);
    }
    report.avg_class_gap = obj.at("avg_class_gap").get<double>();
    return report;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string contents((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    return contents;
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out << contents;
        if (!out) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace ncens
