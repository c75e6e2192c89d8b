// hbsl: prepare data, run SL/HBSL experiments, serve feedback, print summaries.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hbsl/data/liar.hpp"
#include "hbsl/data/partition.hpp"
#include "hbsl/data/synthetic_liar.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/experiment/aggregate.hpp"
#include "hbsl/experiment/config.hpp"
#include "hbsl/experiment/report.hpp"
#include "hbsl/experiment/runner.hpp"
#include "hbsl/hitl/server.hpp"
#include "hbsl/hitl/session.hpp"
#include "hbsl/log.hpp"
#include "hbsl/version.hpp"

namespace fs = std::filesystem;
using namespace hbsl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct PrepareArgs {
    std::string liar_dir;
    std::string partition_spec;
    std::string out;
    std::uint64_t seed = 2022;
    std::size_t min_count = 1;
    bool force = false;
};

struct RunArgs {
    std::string config;
    std::string mode;
    std::string out;
    bool serve_feedback = false;
    bool force = false;
    std::vector<std::string> overrides;
};

struct ReportArgs {
    std::vector<std::string> run_dirs;
};

struct SynthArgs {
    std::string out;
    std::uint64_t seed = data::SyntheticLiarOptions{}.seed;
    bool force = false;
};

void refuse_overwrite(const fs::path& p, bool force) {
    if (fs::exists(p) && !force) throw ConfigError(p.string() + " already exists (use --force to overwrite)");
}

int cmd_prepare(const PrepareArgs& a) {
    const auto spec = data::load_partition_spec(a.partition_spec);
    const fs::path out(a.out);
    const auto manifest_path = out / "partition_manifest.json";
    refuse_overwrite(manifest_path, a.force);

    const auto corpus = experiment::load_corpus(a.liar_dir);
    auto shards = data::partition(corpus.examples, spec, a.seed);
    const auto vocab = data::build_vocabulary(shards, a.min_count);
    data::check_disjoint(shards);

    fs::create_directories(out);
    std::ofstream(manifest_path) << data::partition_manifest(shards, spec, a.seed, vocab.size()).dump(2) << "\n";

    std::printf("corpus: %zu rows, %zu kept, %zu skipped, %zu examples (%zu True)\n", corpus.load.rows,
                corpus.load.kept, corpus.load.skipped(), corpus.examples.size(), data::count_true(corpus.examples));
    std::printf("vocabulary: %zu entries\n", vocab.size());
    std::printf("%-6s %8s %8s %8s %8s %8s %8s\n", "node", "train_F", "train_T", "valid_F", "valid_T", "test_F", "test_T");
    for (const auto& s : shards) {
        auto tf = [](const data::Dataset& d) {
            const auto t = data::count_true(d);
            return std::pair{d.size() - t, t};
        };
        const auto [trf, trt] = tf(s.train);
        const auto [vaf, vat] = tf(s.validation);
        const auto [tef, tet] = tf(s.test);
        std::printf("%-6u %8zu %8zu %8zu %8zu %8zu %8zu\n", unsigned(s.node_id), trf, trt, vaf, vat, tef, tet);
    }
    std::printf("wrote %s\n", manifest_path.string().c_str());
    return kExitOk;
}

int cmd_run(const RunArgs& a) {
    auto overrides = a.overrides;
    if (!a.mode.empty()) overrides.push_back("experiment.mode=" + a.mode);
    if (!a.out.empty()) overrides.push_back("experiment.out_dir=" + a.out);
    if (a.serve_feedback) overrides.push_back("feedback.provider=human");
    const auto cfg = experiment::load_config(a.config, overrides);

    experiment::RunnerHooks hooks;
    std::vector<std::unique_ptr<hitl::AnnotationSession>> sessions;
    std::vector<std::unique_ptr<hitl::FeedbackServer>> servers;
    if (cfg.provider == experiment::ProviderKind::human) {
        const auto spec = data::load_partition_spec(cfg.partition_spec);
        for (const auto& n : spec.nodes) {
            sessions.push_back(std::make_unique<hitl::AnnotationSession>(n.node_id));
            hooks.sessions[n.node_id] = sessions.back().get();
            servers.push_back(std::make_unique<hitl::FeedbackServer>(*sessions.back()));
            const int port = servers.back()->start(
                "127.0.0.1", cfg.feedback_port_base > 0 ? cfg.feedback_port_base + n.node_id : 0);
            std::printf("node %u feedback endpoint: http://127.0.0.1:%d/api/v1/\n", unsigned(n.node_id), port);
        }
        std::fflush(stdout);
    }

    const auto result = experiment::run_experiment(cfg, a.force, hooks);
    for (const auto& r : result.runs) {
        std::printf("run %u: %s, %zu rounds%s%s\n", r.run_id, r.ok ? "ok" : "FAILED", r.rounds_completed,
                    r.early_stopped ? " (early stop)" : "", r.ok ? "" : (": " + r.error).c_str());
    }
    if (result.summary) {
        std::cout << experiment::render_table(*result.summary, swarm::to_string(cfg.mode));
    }
    std::printf("wrote %s\n", result.out_dir.string().c_str());
    return result.all_ok() ? kExitOk : kExitRuntime;
}

experiment::Summary load_summary(const fs::path& dir) {
    const auto path = dir / "reports.csv";
    if (!fs::exists(path)) throw EvaluationError("no reports found in " + dir.string());
    const auto reports = experiment::read_reports_csv(path.string());
    if (reports.empty()) throw EvaluationError("no reports found in " + dir.string());
    return experiment::aggregate(reports);
}

std::string label_for(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (in) {
        try {
            const auto j = nlohmann::json::parse(in);
            return j.at("config").at("experiment").at("mode").get<std::string>();
        } catch (const std::exception&) {
        }
    }
    return dir.filename().string();
}

int cmd_report(const ReportArgs& a) {
    if (a.run_dirs.size() > 2) throw ConfigError("report takes one or two --run-dir values");
    const auto first = load_summary(a.run_dirs[0]);
    if (a.run_dirs.size() == 1) {
        std::cout << experiment::render_table(first, label_for(a.run_dirs[0]));
        return kExitOk;
    }
    const auto second = load_summary(a.run_dirs[1]);
    std::cout << experiment::render_table(first, label_for(a.run_dirs[0])) << "\n"
              << experiment::render_table(second, label_for(a.run_dirs[1])) << "\n"
              << experiment::render_comparison(first, label_for(a.run_dirs[0]), second, label_for(a.run_dirs[1]));
    return kExitOk;
}

int cmd_synth(const SynthArgs& a) {
    const fs::path out(a.out);
    refuse_overwrite(out / "train.tsv", a.force);
    data::SyntheticLiarOptions opt;
    opt.seed = a.seed;
    data::write_synthetic_liar(out, opt);
    std::printf("wrote train.tsv, valid.tsv, test.tsv to %s\n", out.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Swarm learning with human feedback for fake-news detection"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    int verbosity = 0;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbosity, "More log output (repeatable)");
    app.add_flag("-q,--quiet", quiet, "Only log errors");

    PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare", "Load a LIAR directory, partition it and write the manifest");
    prepare->add_option("--liar-dir", prep.liar_dir, "Directory with train.tsv, valid.tsv, test.tsv")->required();
    prepare->add_option("--partition-spec", prep.partition_spec, "Partition spec JSON")->required();
    prepare->add_option("--out", prep.out, "Output directory")->required();
    prepare->add_option("--seed", prep.seed, "Partition seed")->capture_default_str();
    prepare->add_option("--min-count", prep.min_count, "Minimum token count for the vocabulary")->capture_default_str();
    prepare->add_flag("--force", prep.force, "Overwrite an existing manifest");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run an SL or HBSL experiment");
    run_cmd->add_option("--config", run.config, "Experiment config (TOML)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--mode", run.mode, "Override experiment.mode")->check(CLI::IsMember({"SL", "HBSL"}));
    run_cmd->add_option("--out", run.out, "Override experiment.out_dir");
    run_cmd->add_flag("--serve-feedback", run.serve_feedback,
                      "Serve per-node feedback endpoints and use human feedback with oracle fallback");
    run_cmd->add_flag("--force", run.force, "Overwrite a non-empty run directory");
    run_cmd->add_option("--set", run.overrides, "Override a config key: section.key=value (repeatable)");

    ReportArgs rep;
    auto* report = app.add_subcommand("report", "Print the accuracy table for one run directory, or compare two");
    report->add_option("--run-dir", rep.run_dirs, "Run directory (give twice for a side-by-side delta)")
        ->required()
        ->expected(1, 2);

    SynthArgs syn;
    auto* synth = app.add_subcommand("synth-liar", "Write a synthetic corpus in the LIAR TSV layout");
    synth->add_option("--out", syn.out, "Output directory")->required();
    synth->add_option("--seed", syn.seed, "Generator seed")->capture_default_str();
    synth->add_flag("--force", syn.force, "Overwrite existing files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    log::set_level(quiet ? log::Level::error
                         : verbosity >= 2 ? log::Level::debug
                         : verbosity == 1 ? log::Level::info
                                          : log::Level::warn);
    try {
        if (*prepare) return cmd_prepare(prep);
        if (*run_cmd) return cmd_run(run);
        if (*report) return cmd_report(rep);
        if (*synth) return cmd_synth(syn);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
