#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <numeric>

#include "clidmu/correlation.hpp"
#include "experiment_config.hpp"

#ifndef CLIDMU_VERSION
#define CLIDMU_VERSION "0.0.0"
#endif

namespace clidmu::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

/// Written before the work starts and rewritten when it ends.
class Manifest {
public:
    Manifest(fs::path dir, std::string command, const ExperimentConfig& cfg) : dir_(std::move(dir)) {
        doc_["command"] = std::move(command);
        doc_["version"] = CLIDMU_VERSION;
        doc_["seed"] = cfg.train.seed;
        doc_["config"] = cfg.echo();
        doc_["started"] = utc_now();
        doc_["status"] = "running";
        write_json(path(), doc_);
    }
    ordered_json& doc() { return doc_; }
    void finish(const std::string& status, const std::vector<fs::path>& outputs) {
        doc_["finished"] = utc_now();
        doc_["status"] = status;
        auto& list = doc_["outputs"] = ordered_json::array();
        for (const auto& p : outputs) list.push_back(fs::relative(p, dir_).generic_string());
        write_json(path(), doc_);
    }

private:
    fs::path path() const { return dir_ / "manifest.json"; }
    fs::path dir_;
    ordered_json doc_;
};

struct Splits {
    LabeledDataset train;
    LabeledDataset test;
};

Splits prepare_data(const ExperimentConfig& cfg) {
    Splits s;
    if (!cfg.train_csv.empty()) {
        s.train = read_csv(cfg.train_csv);
        if (!cfg.test_csv.empty()) {
            s.test = read_csv(cfg.test_csv);
            const auto classes = std::max(s.train.classes, s.test.classes);
            s.train.classes = s.test.classes = classes;
            if (s.test.dim() != s.train.dim()) throw DataError("test_csv feature width differs from train_csv");
        }
        return s;
    }
    const auto all = generate_blobs(cfg.data_seed, cfg.blob_spec(cfg.n + cfg.test_n));
    std::vector<std::size_t> train_idx(cfg.n), test_idx(cfg.test_n);
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
    std::iota(test_idx.begin(), test_idx.end(), cfg.n);
    s.train = inject_noise(all.subset(train_idx), cfg.noise_spec());
    s.test = all.subset(test_idx);
    return s;
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", c.overrides, "Override a config key: key=value (repeatable)");
    sub->add_option("-o,--out", c.out_dir, "Output directory (config key out_dir)");
    sub->add_option("--seed", c.seed, "Training seed (config key seed)");
}

ExperimentConfig resolve(const Common& c, const std::vector<std::string>& flag_overrides) {
    ExperimentConfig cfg;
    if (!c.config_path.empty()) load_config_file(c.config_path, cfg);
    apply_overrides(c.overrides, cfg);
    apply_overrides(flag_overrides, cfg);
    if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
    if (c.seed) cfg.train.seed = *c.seed;
    cfg.validate();
    return cfg;
}

int cmd_generate_data(const ExperimentConfig& cfg, std::ostream& out) {
    if (!cfg.train_csv.empty()) throw ConfigError("generate-data: train_csv must not be set");
    const auto split = prepare_data(cfg);
    fs::create_directories(cfg.out_dir);
    const auto train_path = cfg.out_dir / "train.csv";
    write_csv(train_path, split.train);
    ordered_json meta;
    meta["generator"] = {{"kind", "blobs"}, {"n", cfg.n},         {"test_n", cfg.test_n}, {"dim", cfg.dim},
                         {"classes", cfg.classes}, {"class_sep", cfg.class_sep}, {"data_seed", cfg.data_seed}};
    meta["noise"] = {{"kind", std::string(to_string(cfg.noise))},
                     {"rate", cfg.noise_rate},
                     {"seed", cfg.noise_seed},
                     {"idn_std", cfg.idn_std},
                     {"realized_rate", split.train.noise_rate()}};
    meta["files"] = {{"train", "train.csv"}};
    if (cfg.test_n > 0) {
        write_csv(cfg.out_dir / "test.csv", split.test);
        meta["files"]["test"] = "test.csv";
    }
    meta["version"] = CLIDMU_VERSION;
    write_json(cfg.out_dir / "dataset.json", meta);
    out << "wrote " << train_path.string() << " (" << split.train.size() << " rows, realized noise "
        << format_double(split.train.noise_rate()) << ")\n";
    return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto data = prepare_data(cfg);
    if (cfg.train.batch_size > data.train.size() || cfg.train.meta_set_size > data.train.size()) {
        err << "warning: batch_size/meta_set_size exceed the " << data.train.size()
            << " training rows and are scaled down\n";
    }
    const bool pseudo = cfg.train.meta_strategy == MetaStrategy::pseudo_clean_gmm;
    MetaSet meta{{}, cfg.train.meta_strategy};
    if (!pseudo) {
        Prng meta_rng(cfg.meta_seed);
        meta = select_meta_set(data.train, std::min(cfg.train.meta_set_size, data.train.size()),
                               cfg.train.meta_strategy, meta_rng);
    }

    fs::create_directories(cfg.out_dir);
    const auto snap_dir = cfg.out_dir / "snapshots";
    fs::create_directories(snap_dir);
    for (const auto& e : fs::directory_iterator(snap_dir)) {
        if (e.path().extension() == ".snap") fs::remove(e.path());
    }
    Manifest manifest(cfg.out_dir, "train", cfg);

    TrainingResult result;
    try {
        result = run_training(cfg.train, data.train, meta, data.test);
    } catch (const TrainingAborted& e) {
        const auto dump = cfg.out_dir / "abort_state.snap";
        write_snapshot(dump, Snapshot{e.last_params, 0.0, 0});
        manifest.doc()["error"] = e.what();
        manifest.doc()["abort_iteration"] = e.iteration;
        manifest.finish("aborted", {dump});
        err << "error: " << e.what() << " (state dumped to " << dump.string() << ")\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        manifest.doc()["error"] = e.what();
        manifest.finish("failed", {});
        throw;
    }

    std::vector<fs::path> outputs;
    const auto metrics_path = cfg.out_dir / "metrics.csv";
    result.metrics.write_csv(metrics_path);
    outputs.push_back(metrics_path);
    for (const auto& s : result.snapshots.entries()) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03d.snap", s.epoch);
        write_snapshot(snap_dir / name, s);
        outputs.push_back(snap_dir / name);
    }
    std::sort(outputs.begin() + 1, outputs.end());

    auto& doc = manifest.doc();
    doc["iterations"] = result.iterations;
    doc["snapshot_epochs"] = ordered_json::array();
    for (const auto& s : result.snapshots.entries()) doc["snapshot_epochs"].push_back(s.epoch);
    if (data.test.size() > 0) {
        doc["best_test_accuracy"] = result.best_test_accuracy;
        if (!result.snapshots.empty()) {
            const double ens = accuracy(ensemble_predict(result.snapshots, data.test.x), data.test.y_clean);
            doc["ensemble_test_accuracy"] = ens;
            out << "ensemble test accuracy " << format_double(ens) << "\n";
        }
        out << "best test accuracy " << format_double(result.best_test_accuracy) << "\n";
    }
    manifest.finish("ok", outputs);
    out << "wrote " << metrics_path.string() << " and " << result.snapshots.size() << " snapshots\n";
    return kExitOk;
}

int cmd_correlate(const ExperimentConfig& cfg, std::ostream& out) {
    CorrelationConfig cc;
    cc.blobs = cfg.blob_spec(cfg.n);
    cc.test_fraction = cfg.test_fraction;
    cc.data_seed = cfg.data_seed;
    cc.noise = cfg.noise;
    cc.rates = cfg.rates;
    cc.train = cfg.train;
    cc.parallel = cfg.parallel;
    if (cc.rates.size() < 3) throw ConfigError("correlate: rates needs at least 3 settings");

    fs::create_directories(cfg.out_dir);
    Manifest manifest(cfg.out_dir, "correlate", cfg);
    const auto result = correlation_study(cc);
    const auto report_path = cfg.out_dir / "correlation.csv";
    const auto metrics_path = cfg.out_dir / "metrics.csv";
    result.report.write_csv(report_path);
    result.metrics.write_csv(metrics_path);
    const double frac = result.report.fraction_at_least(kStrongCorrelation, 5);
    manifest.doc()["fraction_r_at_least_0.7_after_epoch_5"] = frac;
    manifest.finish("ok", {report_path, metrics_path});
    out << "fraction of epochs after 5 with r >= 0.7: " << format_double(frac) << "\n";
    return kExitOk;
}

int cmd_ensemble_predict(const fs::path& snapshots, const fs::path& data_path, const fs::path& out_dir,
                         std::ostream& out) {
    const auto store = load_snapshot_dir(snapshots);
    const auto data = read_csv(data_path);
    const auto probs = ensemble_predict(store, data.x);
    if (probs.cols() < data.classes) throw DataError("dataset labels exceed the snapshot class count");

    fs::create_directories(out_dir);
    {
        std::ofstream pred(out_dir / "predictions.csv");
        if (!pred) throw std::runtime_error("cannot write predictions.csv");
        pred << "index";
        for (std::size_t k = 0; k < probs.cols(); ++k) pred << ",prob_" << k;
        pred << ",predicted,true\n";
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            const auto row = probs.row(i);
            pred << i;
            for (double v : row) pred << "," << format_double(v);
            const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            pred << "," << best << "," << data.y_clean[i] << "\n";
        }
    }
    const auto bound = bound_check(store, data.x, data.y_clean);
    {
        std::ofstream rep(out_dir / "bound.csv");
        if (!rep) throw std::runtime_error("cannot write bound.csv");
        rep << "lhs,rhs,holds\n"
            << format_double(bound.lhs) << "," << format_double(bound.rhs) << "," << (bound.holds ? "true" : "false")
            << "\n";
    }
    out << "snapshots " << store.size() << ", accuracy " << format_double(accuracy(probs, data.y_clean))
        << ", bound lhs " << format_double(bound.lhs) << " rhs " << format_double(bound.rhs)
        << (bound.holds ? " holds" : " VIOLATED") << "\n";
    return kExitOk;
}

void write_matrix_csv(const fs::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << "\n";
    }
}

int cmd_dump_graphs(const fs::path& snapshot, const fs::path& data_path, std::size_t rows, double tau,
                    const fs::path& out_dir, std::ostream& out) {
    const auto model = MlpClassifier::from_params(read_snapshot(snapshot).params);
    const auto data = read_csv(data_path);
    rows = std::min(rows, data.size());
    if (rows < 2) throw DataError("dump-graphs: need at least 2 rows");
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto t = classifier_forward(model, data.x.select_rows(idx));
    const auto g = build_graphs(t.embeddings(), t.probs, tau);
    fs::create_directories(out_dir);
    write_matrix_csv(out_dir / "ge_hat.csv", g.ge_hat);
    write_matrix_csv(out_dir / "gq_hat.csv", g.gq_hat);
    out << "clid " << format_double(clid_loss(g.gq_hat, g.ge_hat).value) << " over " << rows << " rows\n";
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-layer information divergence meta-updates for noisy-label training"};
    app.require_subcommand(1);
    app.set_version_flag("--version", CLIDMU_VERSION);

    Common gen_opts, train_opts, corr_opts;
    auto* gen = app.add_subcommand("generate-data", "Write a blob dataset with injected label noise");
    add_common(gen, gen_opts);

    auto* train = app.add_subcommand("train", "Run bilevel training and write metrics, snapshots and a manifest");
    add_common(train, train_opts);
    std::string objective, strategy, sg;
    train->add_option("--meta-objective", objective, "clid | ce | mae | none")
        ->check(CLI::IsMember({"clid", "ce", "mae", "none"}));
    train->add_option("--meta-set", strategy, "random | balanced | pseudo-clean | oracle-clean")
        ->check(CLI::IsMember({"random", "balanced", "pseudo-clean", "oracle-clean"}));
    train->add_option("--sg", sg, "target-q | target-e | none")->check(CLI::IsMember({"target-q", "target-e", "none"}));

    auto* corr = app.add_subcommand("correlate", "Relate test CE and CLID across noise rates");
    add_common(corr, corr_opts);

    auto* ens = app.add_subcommand("ensemble-predict", "Average snapshot predictions and check the exponential bound");
    std::string ens_snaps, ens_data, ens_out = ".";
    ens->add_option("--snapshots", ens_snaps, "Directory of .snap files")->required();
    ens->add_option("--data", ens_data, "Dataset CSV")->required();
    ens->add_option("-o,--out", ens_out, "Output directory");

    auto* dump = app.add_subcommand("dump-graphs", "Write the normalized similarity graphs of one snapshot");
    std::string dump_snap, dump_data, dump_out = ".";
    std::size_t dump_rows = 16;
    double dump_tau = kDefaultTau;
    dump->add_option("--snapshot", dump_snap, "Snapshot file")->required();
    dump->add_option("--data", dump_data, "Dataset CSV")->required();
    dump->add_option("--rows", dump_rows, "Leading rows forming the batch");
    dump->add_option("--tau", dump_tau, "Embedding-graph temperature");
    dump->add_option("-o,--out", dump_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) return cmd_generate_data(resolve(gen_opts, {}), out);
        if (*train) {
            std::vector<std::string> flags;
            if (!objective.empty()) flags.push_back("meta_objective=" + objective);
            if (!strategy.empty()) flags.push_back("meta_set=" + strategy);
            if (!sg.empty()) flags.push_back("sg=" + sg);
            return cmd_train(resolve(train_opts, flags), out, err);
        }
        if (*corr) return cmd_correlate(resolve(corr_opts, {}), out);
        if (*ens) return cmd_ensemble_predict(ens_snaps, ens_data, ens_out, out);
        if (*dump) return cmd_dump_graphs(dump_snap, dump_data, dump_rows, dump_tau, dump_out, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace clidmu::cli
