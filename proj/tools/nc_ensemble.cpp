#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncens/calibration.hpp"
#include "ncens/data.hpp"
#include "ncens/ensemble.hpp"
#include "ncens/errors.hpp"
#include "ncens/rng.hpp"
#include "ncens/serialize.hpp"
#include "ncens/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ncens;

namespace {

struct RunConfig {
    std::string mode;  // single | pure | nc
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::Relu;
    std::size_t member_count = 1;
    double lambda = 0.0;
    SgdConfig sgd;
    std::uint64_t seed = 0;
    std::size_t bins = 10;
    EceWeighting ece_weighting = EceWeighting::Standard;
    std::string train_data;
    std::string eval_data;
};

EceWeighting weighting_from_name(const std::string& name) {
    if (name == "standard") return EceWeighting::Standard;
    if (name == "paper") return EceWeighting::Paper;
    throw ConfigError("ece_weighting must be 'standard' or 'paper', got '" + name + "'");
}

RunConfig load_run_config(const std::string& path) {
    json obj = json::parse(read_file(path), nullptr, false);
    if (obj.is_discarded()) throw ConfigError("malformed config JSON: " + path);

    RunConfig cfg;
    cfg.mode = obj.at("mode").get<std::string>();
    cfg.layer_sizes = obj.at("layer_sizes").get<std::vector<std::size_t>>();
    const auto act = obj.value("activation", std::string("relu"));
    if (act == "relu")
        cfg.activation = Activation::Relu;
    else if (act == "tanh")
        cfg.activation = Activation::Tanh;
    else
        throw ConfigError("activation must be 'relu' or 'tanh', got '" + act + "'");
    cfg.member_count = obj.value("M", std::size_t{1});
    cfg.lambda = obj.value("lambda", 0.0);
    if (obj.contains("sgd")) {
        const auto& sgd = obj.at("sgd");
        cfg.sgd.learning_rate = sgd.value("lr", 0.1);
        cfg.sgd.momentum = sgd.value("momentum", 0.0);
        cfg.sgd.epochs = sgd.value("epochs", std::size_t{10});
        cfg.sgd.batch_size = sgd.value("batch_size", std::size_t{32});
    }
    cfg.seed = obj.value("seed", std::uint64_t{0});
    cfg.bins = obj.value("bins", std::size_t{10});
    cfg.ece_weighting = weighting_from_name(obj.value("ece_weighting", std::string("standard")));
    cfg.train_data = obj.value("train_data", std::string());
    cfg.eval_data = obj.value("eval_data", std::string());

    // Mode invariants; an explicit --override-lambda is applied after this.
    if (cfg.mode == "single") {
        if (cfg.member_count != 1) throw ConfigError("mode 'single' requires M = 1");
    } else if (cfg.mode == "pure") {
        if (cfg.lambda != 0.0) throw ConfigError("mode 'pure' requires lambda = 0");
    } else if (cfg.mode == "nc") {
        if (!(cfg.lambda > 0.0)) throw ConfigError("mode 'nc' requires lambda > 0");
    } else {
        throw ConfigError("mode must be 'single', 'pure' or 'nc', got '" + cfg.mode + "'");
    }
    return cfg;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_gen(const BlobSpec& spec, const std::string& out_path) {
    const Dataset ds = gen_blobs(spec);
    std::ostringstream csv;
    csv.precision(17);
    for (std::size_t c = 0; c < ds.dim(); ++c) csv << "f" << c << ",";
    csv << "label\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.dim(); ++c) csv << ds.features(r, c) << ",";
        csv << ds.class_names[ds.labels[r]] << "\n";
    }
    atomic_write(out_path, csv.str());
    std::cout << "wrote " << ds.size() << " samples, " << ds.class_count << " classes to "
              << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::string data_path, std::string eval_path,
              const std::string& out_dir, double override_lambda, bool has_override) {
    RunConfig run = load_run_config(config_path);
    if (has_override) run.lambda = override_lambda;
    if (data_path.empty()) data_path = run.train_data;
    if (eval_path.empty()) eval_path = run.eval_data;
    if (data_path.empty()) throw ConfigError("no training data: pass --data or set train_data");

    const Dataset train_set = load_csv(data_path);
    Dataset eval_set;
    if (!eval_path.empty()) eval_set = load_csv(eval_path);

    EnsembleConfig cfg;
    cfg.member_count = run.member_count;
    cfg.lambda = run.lambda;
    cfg.sgd = run.sgd;
    SplitMix64 sm(run.seed);
    for (std::size_t i = 0; i < run.member_count; ++i) cfg.member_seeds.push_back(sm.next());

    TrainingLog log;
    const Ensemble ensemble =
        train(train_set, cfg, run.layer_sizes, run.activation,
              eval_path.empty() ? nullptr : &eval_set, run.seed, &log);

    fs::create_directories(out_dir);
    atomic_write((fs::path(out_dir) / "ensemble.json").string(), ensemble_to_json(ensemble));

    std::ostringstream csv;
    csv << "epoch,train_loss,eval_acc,eval_ece\n";
    for (const auto& row : log) {
        csv << row.epoch << "," << format_double(row.train_loss) << ",";
        if (row.eval_accuracy) csv << format_double(*row.eval_accuracy);
        csv << ",";
        if (row.eval_ece) csv << format_double(*row.eval_ece);
        csv << "\n";
    }
    atomic_write((fs::path(out_dir) / "training_log.csv").string(), csv.str());
    std::cout << "trained " << run.mode << " model (M=" << run.member_count
              << ", lambda=" << run.lambda << ") -> " << out_dir << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_dir, const std::string& data_path, std::size_t bins,
                 const std::string& weighting_name, const std::string& out_path) {
    const Ensemble ensemble =
        ensemble_from_json(read_file((fs::path(model_dir) / "ensemble.json").string()));
    const Dataset data = load_csv(data_path);
    if (data.class_count != ensemble.class_count())
        throw ConfigError("class-count mismatch: model has " +
                          std::to_string(ensemble.class_count()) + " classes, data has " +
                          std::to_string(data.class_count));
    if (data.dim() != ensemble.input_dim())
        throw ConfigError("feature-dim mismatch: model expects " +
                          std::to_string(ensemble.input_dim()) + ", data has " +
                          std::to_string(data.dim()));

    const Matrix probs = predict(ensemble, data.features);
    const EvaluationReport report =
        evaluate(probs, data.labels, bins, ensemble.class_count(),
                 weighting_from_name(weighting_name));
    atomic_write(out_path, report_to_json(report));
    std::cout << "accuracy " << report.accuracy << ", ece " << report.ece << " -> " << out_path
              << "\n";
    return 0;
}

int cmd_report(const std::string& metrics_path, const std::string& out_dir,
               const std::string& svg_path) {
    const EvaluationReport report = report_from_json(read_file(metrics_path));
    fs::create_directories(out_dir);

    std::ostringstream rel;
    rel << "bin_mid,acc,con,count\n";
    for (const auto& row : reliability_rows(report.bins))
        rel << format_double(row.bin_mid) << "," << format_double(row.accuracy) << ","
            << format_double(row.confidence) << "," << row.count << "\n";
    atomic_write((fs::path(out_dir) / "reliability.csv").string(), rel.str());

    std::ostringstream hist;
    hist << "bin_mid,count\n";
    for (std::size_t i = 0; i < report.histogram.size(); ++i)
        hist << format_double((static_cast<double>(i) + 0.5) /
                              static_cast<double>(report.bins.bin_count))
             << "," << report.histogram[i] << "\n";
    atomic_write((fs::path(out_dir) / "histogram.csv").string(), hist.str());

    if (!svg_path.empty()) atomic_write(svg_path, render_report_svg(report));
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

std::string ece_percent(double ece) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * ece);
    return buf;
}

int cmd_compare(const std::vector<std::string>& metrics_paths, const std::string& out_path,
                bool per_class, double flag_threshold) {
    std::vector<std::pair<std::string, EvaluationReport>> runs;
    for (const auto& path : metrics_paths) {
        if (!fs::exists(path)) throw IoError("metrics file not found: " + path);
        runs.emplace_back(fs::path(path).stem().string(), report_from_json(read_file(path)));
    }

    std::ostringstream txt;
    std::ostringstream csv;
    csv << "run,accuracy,ece";
    if (per_class) {
        const std::size_t k = runs.front().second.per_class.size();
        for (std::size_t c = 0; c < k; ++c) csv << ",class" << c;
        csv << ",avg_class_gap";
    }
    csv << "\n";

    for (const auto& [name, report] : runs) {
        char acc_buf[32];
        std::snprintf(acc_buf, sizeof(acc_buf), "%.4f", report.accuracy);
        txt << name << "  acc " << acc_buf << "  ece " << ece_percent(report.ece);
        csv << name << "," << acc_buf << "," << ece_percent(report.ece);
        if (per_class) {
            for (const auto& row : report.per_class) {
                char cell[64];
                std::snprintf(cell, sizeof(cell), "%.2f (%.2f)", row.accuracy,
                              row.mean_confidence);
                std::string flagged = cell;
                const double gap = row.mean_confidence - row.accuracy;
                if (gap > flag_threshold)
                    flagged += " over-confident";
                else if (gap < -flag_threshold)
                    flagged += " under-confident";
                txt << "  " << flagged;
                csv << "," << flagged;
            }
            char gap_buf[32];
            std::snprintf(gap_buf, sizeof(gap_buf), "%.3f", report.avg_class_gap);
            txt << "  avg gap " << gap_buf;
            csv << "," << gap_buf;
        }
        txt << "\n";
    }
    std::cout << txt.str();
    if (!out_path.empty()) atomic_write(out_path, csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"negative-correlation ensemble trainer and calibration evaluator"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset CSV");
    std::string gen_kind = "blobs";
    BlobSpec spec;
    std::string gen_out;
    gen->add_option("--kind", gen_kind, "dataset kind (blobs)");
    gen->add_option("--classes", spec.classes, "number of classes");
    gen->add_option("--per-class", spec.per_class, "samples per class");
    gen->add_option("--dim", spec.dim, "feature dimension");
    gen->add_option("--std", spec.cluster_std, "cluster standard deviation");
    gen->add_option("--spread", spec.center_spread, "center spread (uniform +-spread)");
    gen->add_option("--seed", spec.seed, "RNG seed");
    gen->add_option("--out", gen_out, "output CSV path")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train an ensemble from a config file");
    std::string train_config, train_data, train_eval, train_out;
    double override_lambda = 0.0;
    train_cmd->add_option("--config", train_config, "RunConfig JSON path")->required();
    train_cmd->add_option("--data", train_data, "training CSV (overrides config)");
    train_cmd->add_option("--eval-data", train_eval, "evaluation CSV for the log");
    train_cmd->add_option("--out", train_out, "output model directory")->required();
    auto* override_opt = train_cmd->add_option("--override-lambda", override_lambda,
                                               "force lambda after config validation");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a model on a dataset");
    std::string eval_model, eval_data, eval_weighting = "standard", eval_out;
    std::size_t eval_bins = 10;
    eval_cmd->add_option("--model", eval_model, "model directory")->required();
    eval_cmd->add_option("--data", eval_data, "evaluation CSV")->required();
    eval_cmd->add_option("--bins", eval_bins, "number of confidence bins");
    eval_cmd->add_option("--ece-weighting", eval_weighting, "standard | paper");
    eval_cmd->add_option("--out", eval_out, "metrics JSON path")->required();

    // report
    auto* report_cmd = app.add_subcommand("report", "emit reliability/histogram data");
    std::string report_metrics, report_out, report_svg;
    report_cmd->add_option("--metrics", report_metrics, "metrics JSON path")->required();
    report_cmd->add_option("--out-dir", report_out, "output directory")->required();
    report_cmd->add_option("--svg", report_svg, "also render an SVG chart");

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "tabulate several metrics files");
    std::vector<std::string> compare_files;
    std::string compare_out;
    bool compare_per_class = false;
    double flag_threshold = 0.1;
    compare_cmd->add_option("files", compare_files, "metrics JSON files")
        ->expected(2, -1)
        ->required();
    compare_cmd->add_option("--out", compare_out, "CSV output path");
    compare_cmd->add_flag("--per-class", compare_per_class, "include per-class columns");
    compare_cmd->add_option("--flag-threshold", flag_threshold,
                            "|conf - acc| above this flags a class");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            if (gen_kind != "blobs") throw ConfigError("unknown dataset kind '" + gen_kind + "'");
            return cmd_gen(spec, gen_out);
        }
        if (train_cmd->parsed())
            return cmd_train(train_config, train_data, train_eval, train_out, override_lambda,
                             override_opt->count() > 0);
        if (eval_cmd->parsed())
            return cmd_evaluate(eval_model, eval_data, eval_bins, eval_weighting, eval_out);
        if (report_cmd->parsed()) return cmd_report(report_metrics, report_out, report_svg);
        if (compare_cmd->parsed())
            return cmd_compare(compare_files, compare_out, compare_per_class, flag_threshold);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
