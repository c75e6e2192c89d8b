#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbsl/data/synthetic_liar.hpp"
#include "hbsl/experiment/aggregate.hpp"
#include "hbsl/experiment/config.hpp"
#include "hbsl/experiment/evaluate.hpp"
#include "hbsl/experiment/report.hpp"
#include "hbsl/experiment/runner.hpp"

using namespace hbsl;
using namespace hbsl::experiment;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("hbsl_exp_" + std::to_string(::getpid()) + "_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small corpus and three-node spec shared by the end-to-end tests.
struct MiniSetup {
    fs::path root = scratch("mini");
    fs::path liar = root / "liar";
    fs::path spec = root / "spec.json";

    MiniSetup() {
        data::SyntheticLiarOptions opt;
        opt.filler_words = 300;
        opt.cue_words_per_pool = 20;
        opt.splits = {{"train.tsv", {30, 60, 50, 60, 60, 90}}, {"valid.tsv", {5, 10, 10, 10, 10, 15}},
                      {"test.tsv", {5, 10, 10, 10, 10, 15}}};
        data::write_synthetic_liar(liar, opt);
        json j{{"name", "mini"},
               {"seed", 1},
               {"nodes",
                {{{"node_id", 1}, {"train_count", 40}, {"test_count", 30}, {"class_ratio", 0.2}},
                 {{"node_id", 2}, {"train_count", 50}, {"test_count", 20}, {"class_ratio", 0.2}},
                 {{"node_id", 3}, {"train_count", 30}, {"test_count", 25}, {"class_ratio", 0.2}}}}};
        std::ofstream(spec) << j.dump(2);
    }
    ~MiniSetup() { fs::remove_all(root); }

    ExperimentConfig config(swarm::Mode mode, const std::string& out) const {
        ExperimentConfig c;
        c.mode = mode;
        c.node_count = 3;
        c.rounds = 3;
        c.runs = 2;
        c.liar_dir = liar.string();
        c.partition_spec = spec.string();
        c.embed_dim = 6;
        c.hidden_dim = 4;
        c.epochs = 2;
        c.batch_size = 8;
        c.out_dir = (root / out).string();
        return c;
    }
};

MiniSetup& mini() {
    static MiniSetup m;
    return m;
}

std::vector<RoundReport> fixture(const std::string& name) {
    return read_reports_csv(std::string(HBSL_FIXTURES) + "/" + name + ".csv");
}

}  // namespace

// ---- toml subset ----

TEST(Toml, ParsesSectionsAndTypes) {
    const auto j = toml::parse_string(R"(
# comment
top = 1
[a]
s = "x # not a comment"   # trailing
i = -42
u = 1_000
f = 1e-3
b = true
arr = [1, 2, 3]
strs = ["p", "q"]
[a.sub]
deep = 0.5
)");
    EXPECT_EQ(j["top"], 1);
    EXPECT_EQ(j["a"]["s"], "x # not a comment");
    EXPECT_EQ(j["a"]["i"], -42);
    EXPECT_EQ(j["a"]["u"], 1000);
    EXPECT_DOUBLE_EQ(j["a"]["f"].get<double>(), 1e-3);
    EXPECT_EQ(j["a"]["b"], true);
    EXPECT_EQ(j["a"]["arr"], json({1, 2, 3}));
    EXPECT_EQ(j["a"]["strs"], json({"p", "q"}));
    EXPECT_DOUBLE_EQ(j["a"]["sub"]["deep"].get<double>(), 0.5);
}

TEST(Toml, RejectsMalformedInput) {
    EXPECT_THROW(toml::parse_string("[a\nx=1"), ConfigError);
    EXPECT_THROW(toml::parse_string("x 1"), ConfigError);
    EXPECT_THROW(toml::parse_string("x = 1\nx = 2"), ConfigError);
    EXPECT_THROW(toml::parse_string("x = \"open"), ConfigError);
    EXPECT_THROW(toml::parse_string("x = 12abc"), ConfigError);
    EXPECT_THROW(toml::parse_string("bad key = 1"), ConfigError);
}

// ---- configuration ----

TEST(Config, DefaultsMatchHyperparameterTable) {
    ExperimentConfig c;
    EXPECT_EQ(c.embed_dim, 40u);
    EXPECT_EQ(c.batch_size, 32u);
    EXPECT_EQ(c.epochs, 10u);
    EXPECT_DOUBLE_EQ(c.learning_rate, 1e-3);
    EXPECT_DOUBLE_EQ(c.feedback_portion, 0.2);
    EXPECT_EQ(c.rounds, 10u);
    EXPECT_EQ(c.merge, swarm::MergeRule::average);
    EXPECT_DOUBLE_EQ(c.human_timeout_s, 300.0);
    EXPECT_EQ(c.evaluation, swarm::EvaluationMode::faithful);
}

TEST(Config, RoundTripsThroughJson) {
    ExperimentConfig c;
    c.liar_dir = "d";
    c.partition_spec = "p";
    c.mode = swarm::Mode::HBSL;
    c.merge = swarm::MergeRule::weighted_literal;
    c.run_seeds = {1, 2, 3, 4, 5};
    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, ListsAllErrorsAtOnce) {
    auto j = to_json(ExperimentConfig{});
    j["experiment"]["runs"] = 0;
    j["model"]["pooling"] = "max";
    j["feedback"]["portion"] = "lots";
    j["swarm"]["mystery"] = 1;
    try {
        config_from_json(j);
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("model.pooling"), std::string::npos);
        EXPECT_NE(msg.find("feedback.portion"), std::string::npos);
        EXPECT_NE(msg.find("swarm.mystery"), std::string::npos);
    }
    j = to_json(ExperimentConfig{});
    j["experiment"]["runs"] = 0;
    j["feedback"]["oracle_noise"] = 2.0;
    try {
        config_from_json(j);
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("runs"), std::string::npos);
        EXPECT_NE(msg.find("oracle_noise"), std::string::npos);
        EXPECT_NE(msg.find("liar_dir"), std::string::npos);
    }
}

TEST(Config, OverridesMustNameExistingKeys) {
    auto j = to_json(ExperimentConfig{});
    apply_overrides(j, {"model.hidden_dim=8", "experiment.mode=HBSL", "feedback.portion=0.5"});
    EXPECT_EQ(j["model"]["hidden_dim"], 8);
    EXPECT_EQ(j["experiment"]["mode"], "HBSL");
    EXPECT_THROW(apply_overrides(j, {"model.depth=3"}), ConfigError);
    EXPECT_THROW(apply_overrides(j, {"hidden_dim=3"}), ConfigError);
    EXPECT_THROW(apply_overrides(j, {"model.hidden_dim"}), ConfigError);
}

TEST(Config, LoadResolvesPathsAndSeedVariable) {
    const auto dir = scratch("cfg");
    std::ofstream(dir / "c.toml") << "[experiment]\nseed = 5\n[data]\nliar_dir = \"liar\"\npartition_spec = \"/abs/spec.json\"\n";
    ::unsetenv("SWARM_HITL_SEED");
    auto c = load_config(dir / "c.toml");
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(fs::path(c.liar_dir), (dir / "liar").lexically_normal());
    EXPECT_EQ(c.partition_spec, "/abs/spec.json");
    ::setenv("SWARM_HITL_SEED", "77", 1);
    EXPECT_EQ(load_config(dir / "c.toml").seed, 77u);
    ::setenv("SWARM_HITL_SEED", "seven", 1);
    EXPECT_THROW(load_config(dir / "c.toml"), ConfigError);
    ::unsetenv("SWARM_HITL_SEED");
    EXPECT_THROW(load_config(dir / "missing.toml"), ConfigError);
    fs::remove_all(dir);
}

TEST(Config, ShippedConfigsMatchTheirSpecs) {
    for (const char* name : {"4nodes.toml", "8nodes.toml"}) {
        const auto c = load_config(fs::path(HBSL_CONFIGS) / name);
        const auto spec = data::load_partition_spec(c.partition_spec);
        EXPECT_EQ(spec.nodes.size(), c.node_count) << name;
        EXPECT_EQ(c.runs, 5u);
        EXPECT_EQ(c.embed_dim, 40u);
    }
}

// ---- evaluation ----

TEST(Evaluate, CountsCorrectPredictions) {
    auto p = model::init_parameters(4, 2, 2, 1);
    p.fill(0.0);
    p.b_z() = 5.0;  // always predicts 1
    data::Dataset d;
    for (int i = 0; i < 10; ++i) {
        data::Example e;
        e.tokens = {2};
        e.label = i < 6 ? 1 : 0;
        d.push_back(e);
    }
    EXPECT_DOUBLE_EQ(evaluate(p, d), 0.6);
    for (auto& e : d) e.label = 1;
    EXPECT_DOUBLE_EQ(evaluate(p, d), 1.0);
    d[0].label = 0;
    EXPECT_DOUBLE_EQ(evaluate(p, d), 0.9);
    EXPECT_THROW(evaluate(p, data::Dataset{}), EvaluationError);
}

// ---- aggregation ----

TEST(Aggregate, SingleReport) {
    const auto s = aggregate({RoundReport{1, 3, 2, 0.75, 0.1, 10, 0}});
    EXPECT_DOUBLE_EQ(s.grand_mean, 0.75);
    EXPECT_DOUBLE_EQ(s.run_mean.at(1), 0.75);
    EXPECT_DOUBLE_EQ(s.node_mean.at(2), 0.75);
    EXPECT_THROW(aggregate({}), EvaluationError);
}

TEST(Aggregate, UsesLastRoundOfEachRunAndNode) {
    std::vector<RoundReport> r{{1, 1, 1, 0.1}, {1, 2, 1, 0.9}, {1, 1, 2, 0.5}, {2, 1, 1, 0.3}};
    const auto s = aggregate(r);
    EXPECT_DOUBLE_EQ(s.cells.at({1, 1}), 0.9);
    EXPECT_DOUBLE_EQ(s.run_mean.at(1), 0.7);
    EXPECT_DOUBLE_EQ(s.node_mean.at(1), 0.6);
    EXPECT_NEAR(s.grand_mean, (0.9 + 0.5 + 0.3) / 3, 1e-15);
}

TEST(Aggregate, ReferenceTablesReaggregate) {
    const std::pair<const char*, double> tables[] = {
        {"sl_4nodes", 87.84}, {"hbsl_4nodes", 91.20}, {"sl_8nodes", 88.30}, {"hbsl_8nodes", 89.80}};
    for (const auto& [name, printed] : tables) {
        const auto s = aggregate(fixture(name));
        EXPECT_NEAR(100.0 * s.grand_mean, printed, 0.01) << name;
        EXPECT_EQ(s.runs.size(), 5u);
    }
    // Row and column averages printed alongside the 4-node SL table.
    const auto sl4 = aggregate(fixture("sl_4nodes"));
    const double run_avg[] = {88.74, 89.50, 87.56, 84.70, 88.70};
    const double node_avg[] = {86.55, 88.16, 89.86, 86.80};
    for (std::uint32_t r = 1; r <= 5; ++r) EXPECT_NEAR(100.0 * sl4.run_mean.at(r), run_avg[r - 1], 0.01);
    for (data::NodeId n = 1; n <= 4; ++n) EXPECT_NEAR(100.0 * sl4.node_mean.at(n), node_avg[n - 1], 0.01);
}

TEST(Aggregate, AggregateOfAggregatesIsGrandMean) {
    for (const char* name : {"sl_4nodes", "hbsl_8nodes"}) {
        const auto s = aggregate(fixture(name));
        double by_run = 0.0, by_node = 0.0;
        for (const auto& [r, v] : s.run_mean) by_run += v;
        for (const auto& [n, v] : s.node_mean) by_node += v;
        EXPECT_NEAR(by_run / double(s.run_mean.size()), s.grand_mean, 1e-12);
        EXPECT_NEAR(by_node / double(s.node_mean.size()), s.grand_mean, 1e-12);
    }
}

TEST(Aggregate, RendersTables) {
    const auto s = aggregate(fixture("sl_4nodes"));
    const auto table = render_table(s, "SL");
    EXPECT_NE(table.find("Run 5"), std::string::npos);
    EXPECT_NE(table.find("87.84%"), std::string::npos);
    EXPECT_EQ(table.find("Run 1"), table.find('\n') + 1);
    const auto cmp = render_comparison(s, "SL", aggregate(fixture("hbsl_4nodes")), "HBSL");
    EXPECT_NE(cmp.find("+3.36"), std::string::npos);
    const auto csv = to_csv(s);
    EXPECT_TRUE(csv.ends_with("\ngrand_mean,,,0.878450\n"));
    EXPECT_TRUE(csv.starts_with("scope,run_id,node_id,accuracy\ncell,1,1,0.864000\n"));
}

TEST(ReportCsv, RoundTrip) {
    std::vector<RoundReport> r{{1, 2, 3, 0.5, 0.25, 100, 20}, {2, 10, 8, 1.0, 0.0, 5, 0}};
    std::istringstream in(to_csv(r));
    EXPECT_EQ(parse_reports_csv(in), r);
    EXPECT_EQ(to_csv(r).substr(0, to_csv(r).find('\n')), kReportCsvHeader);
    std::istringstream bad("nope\n");
    EXPECT_THROW(parse_reports_csv(bad), DataError);
    std::istringstream broken(std::string(kReportCsvHeader) + "\n1,2,x\n");
    EXPECT_THROW(parse_reports_csv(broken), DataError);
}

// ---- runner ----

TEST(EarlyStop, WindowRule) {
    ExperimentConfig c;
    c.early_stop = true;
    EXPECT_FALSE(should_stop_early({0.5, 0.6, 0.7}, c));
    EXPECT_FALSE(should_stop_early({0.5, 0.6, 0.7, 0.8}, c));
    EXPECT_TRUE(should_stop_early({0.80, 0.80, 0.8005, 0.8009}, c));
    c.early_stop = false;
    EXPECT_FALSE(should_stop_early({0.8, 0.8, 0.8, 0.8}, c));
}

TEST(Runner, ProducesRunDirectory) {
    const auto cfg = mini().config(swarm::Mode::HBSL, "layout");
    const auto res = run_experiment(cfg, true);
    ASSERT_TRUE(res.all_ok());
    EXPECT_EQ(res.reports.size(), cfg.runs * cfg.rounds * cfg.node_count);
    for (const char* f : {"manifest.json", "reports.csv", "summary.csv", "partition_manifest.json"})
        EXPECT_TRUE(fs::exists(res.out_dir / f)) << f;
    for (std::size_t r = 1; r <= cfg.runs; ++r)
        for (std::size_t t = 1; t <= cfg.rounds; ++t)
            EXPECT_TRUE(fs::exists(res.out_dir / "checkpoints" / ("run_" + std::to_string(r)) /
                                   ("round_" + std::to_string(t) + ".bin")));
    const auto manifest = json::parse(slurp(res.out_dir / "manifest.json"));
    EXPECT_EQ(manifest["runs"].size(), cfg.runs);
    EXPECT_EQ(manifest["config"]["experiment"]["mode"], "HBSL");
    EXPECT_TRUE(manifest.contains("version"));
    const auto reread = read_reports_csv((res.out_dir / "reports.csv").string());
    ASSERT_EQ(reread.size(), res.reports.size());
    for (std::size_t i = 0; i < reread.size(); ++i) {
        EXPECT_NEAR(reread[i].test_accuracy, res.reports[i].test_accuracy, 1e-6);
        EXPECT_NEAR(reread[i].mean_train_loss, res.reports[i].mean_train_loss, 1e-6);
        EXPECT_EQ(reread[i].train_size, res.reports[i].train_size);
    }
    const auto pm = json::parse(slurp(res.out_dir / "partition_manifest.json"));
    EXPECT_EQ(pm["runs"].size(), cfg.runs);
    EXPECT_NE(pm["runs"][0]["partition"]["seed"], pm["runs"][1]["partition"]["seed"]);
}

TEST(Runner, ReportsAreBoundedAndGrowMonotonically) {
    const auto res = run_experiment(mini().config(swarm::Mode::HBSL, "growth"), true);
    std::map<std::pair<std::uint32_t, data::NodeId>, std::size_t> last;
    for (const auto& r : res.reports) {
        EXPECT_GE(r.test_accuracy, 0.0);
        EXPECT_LE(r.test_accuracy, 1.0);
        auto& prev = last[{r.run_id, r.node_id}];
        EXPECT_GE(r.train_size, prev);
        prev = r.train_size;
        EXPECT_GT(r.feedback_size, 0u);
    }
}

TEST(Runner, SlHasNoFeedbackAndSharesFirstRoundWithHbsl) {
    const auto sl = run_experiment(mini().config(swarm::Mode::SL, "sl"), true);
    const auto hb = run_experiment(mini().config(swarm::Mode::HBSL, "hb"), true);
    ASSERT_EQ(sl.reports.size(), hb.reports.size());
    for (std::size_t i = 0; i < sl.reports.size(); ++i) {
        EXPECT_EQ(sl.reports[i].feedback_size, 0u);
        if (sl.reports[i].round != 1) continue;
        EXPECT_EQ(sl.reports[i].test_accuracy, hb.reports[i].test_accuracy);
        EXPECT_EQ(sl.reports[i].mean_train_loss, hb.reports[i].mean_train_loss);
        EXPECT_EQ(sl.reports[i].train_size, hb.reports[i].train_size);
    }
}

TEST(Runner, DeterministicReports) {
    const auto a = run_experiment(mini().config(swarm::Mode::HBSL, "det_a"), true);
    const auto b = run_experiment(mini().config(swarm::Mode::HBSL, "det_b"), true);
    EXPECT_EQ(slurp(a.out_dir / "reports.csv"), slurp(b.out_dir / "reports.csv"));
    EXPECT_EQ(slurp(a.out_dir / "summary.csv"), slurp(b.out_dir / "summary.csv"));
}

TEST(Runner, ParallelAndSocketMatchDefault) {
    auto base = mini().config(swarm::Mode::HBSL, "mode_base");
    base.runs = 1;
    auto par = base;
    par.parallel = true;
    par.out_dir += "_par";
    auto tcp = base;
    tcp.transport = TransportKind::socket;
    tcp.out_dir += "_tcp";
    const auto a = slurp(run_experiment(base, true).out_dir / "reports.csv");
    EXPECT_EQ(a, slurp(run_experiment(par, true).out_dir / "reports.csv"));
    EXPECT_EQ(a, slurp(run_experiment(tcp, true).out_dir / "reports.csv"));
}

TEST(Runner, FailedRunIsMarkedAndNextContinues) {
    auto cfg = mini().config(swarm::Mode::SL, "failing");
    RunnerHooks hooks;
    hooks.on_report = [](const RoundReport& r) {
        if (r.run_id == 1 && r.round == 2) throw TrainingError("injected");
    };
    const auto res = run_experiment(cfg, true, hooks);
    ASSERT_EQ(res.runs.size(), 2u);
    EXPECT_FALSE(res.runs[0].ok);
    EXPECT_NE(res.runs[0].error.find("injected"), std::string::npos);
    EXPECT_TRUE(res.runs[1].ok);
    ASSERT_TRUE(res.summary);
    EXPECT_EQ(res.summary->runs, std::vector<std::uint32_t>{2});
    const auto manifest = json::parse(slurp(res.out_dir / "manifest.json"));
    EXPECT_EQ(manifest["runs"][0]["status"], "failed");
}

TEST(Runner, RefusesToOverwriteAndChecksNodeCount) {
    auto cfg = mini().config(swarm::Mode::SL, "guard");
    cfg.runs = 1;
    cfg.rounds = 1;
    run_experiment(cfg, true);
    EXPECT_THROW(run_experiment(cfg, false), ConfigError);
    cfg.node_count = 4;
    EXPECT_THROW(run_experiment(cfg, true), ConfigError);
}

TEST(Runner, EarlyStopEndsRun) {
    auto cfg = mini().config(swarm::Mode::SL, "early");
    cfg.runs = 1;
    cfg.rounds = 8;
    cfg.early_stop = true;
    cfg.early_stop_min_delta = 100.0;  // never enough improvement
    cfg.early_stop_window = 2;
    const auto res = run_experiment(cfg, true);
    EXPECT_TRUE(res.runs[0].early_stopped);
    EXPECT_EQ(res.runs[0].rounds_completed, 3u);
}
