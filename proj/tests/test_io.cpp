#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <string>

#include "dap/config.hpp"
#include "dap/io.hpp"

using namespace dap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dap_io_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

fom::SnapshotSet sample_set() {
    fom::SnapshotSet set;
    set.parameters = {{0.02}, {0.03}};
    set.field_layout = "fhn:v,w";
    for (int j = 0; j <= 5; ++j) set.times.push_back(0.25 * j);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int p = 0; p < 2; ++p) {
        Mat traj(6, 8);
        for (Eigen::Index i = 0; i < traj.size(); ++i) traj.data()[i] = u(rng);
        set.states.push_back(std::move(traj));
    }
    return set;
}

pipeline::ModelBundle sample_bundle() {
    pipeline::CaeSpec cae;
    cae.conv_filters = {2};
    cae.dense_units = {4, 4};
    cae.latent_dim = 2;
    pipeline::FfnnSpec ffnn;
    ffnn.hidden_units = {6, 6};
    pipeline::ModelBundle b;
    b.encoder = nn::Network(cae.encoder_layers(8), {8}, 51);
    b.decoder = nn::Network(cae.decoder_layers(8), {cae.latent_dim}, 52);
    b.ffnn = nn::Network(ffnn.layers(cae.latent_dim), {2}, 53);
    b.norm = pipeline::make_normalization({0.02, 0.03}, 1.25);
    b.latent_dim = cae.latent_dim;
    b.dt = 0.25;
    b.t_train_end = 0.75;
    b.t_end = 1.25;
    b.train_params = {0.02, 0.03};
    b.field_layout = "fhn:v,w";
    return b;
}

}  // namespace

TEST_CASE("tensor file: bitwise round trip") {
    TempDir tmp;
    io::TensorData t;
    t.dims = {2, 3};
    t.data = {1.0, -2.5, 3.25, 0.0, 1e-300, -4.75};
    io::write_tensor(tmp.file("a.dapt"), t);
    io::TensorData back = io::read_tensor(tmp.file("a.dapt"));
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
}

TEST_CASE("tensor file: bad magic and truncation rejected") {
    TempDir tmp;
    io::write_text_file(tmp.file("bad.dapt"), "NOPE definitely not a tensor");
    CHECK_THROWS_AS(io::read_tensor(tmp.file("bad.dapt")), IoError);

    io::TensorData t;
    t.dims = {4};
    t.data = {1, 2, 3, 4};
    io::write_tensor(tmp.file("cut.dapt"), t);
    std::string raw = io::read_text_file(tmp.file("cut.dapt"));
    io::write_text_file(tmp.file("cut.dapt"), raw.substr(0, raw.size() - 9));
    CHECK_THROWS_AS(io::read_tensor(tmp.file("cut.dapt")), IoError);

    CHECK_THROWS_AS(io::read_tensor(tmp.file("missing.dapt")), IoError);
}

TEST_CASE("matrix round trip") {
    TempDir tmp;
    Mat m(3, 2);
    m << 1.5, -2.0, 0.0, 4.25, -1e-12, 7.0;
    io::write_matrix(tmp.file("m.dapt"), m);
    CHECK(io::read_matrix(tmp.file("m.dapt")) == m);
}

TEST_CASE("snapshots: directory round trip and corrupt manifest") {
    TempDir tmp;
    fom::SnapshotSet set = sample_set();
    io::save_snapshots(tmp.file("data"), set);
    fom::SnapshotSet back = io::load_snapshots(tmp.file("data"));
    CHECK(back.parameters == set.parameters);
    CHECK(back.times == set.times);
    CHECK(back.field_layout == set.field_layout);
    for (size_t i = 0; i < set.states.size(); ++i) CHECK(back.states[i] == set.states[i]);

    // Remove a required manifest field; the error must name it.
    std::string manifest = io::read_text_file(tmp.file("data/manifest.json"));
    const auto pos = manifest.find("\"field_layout\"");
    REQUIRE(pos != std::string::npos);
    nlohmann::json j = nlohmann::json::parse(manifest);
    j.erase("field_layout");
    io::write_text_file(tmp.file("data/manifest.json"), j.dump());
    try {
        io::load_snapshots(tmp.file("data"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("field_layout") != std::string::npos);
    }
}

TEST_CASE("bundle: checkpoint round trip preserves predictions bitwise") {
    TempDir tmp;
    pipeline::ModelBundle bundle = sample_bundle();
    io::save_bundle(tmp.file("b.dapc"), bundle);
    pipeline::ModelBundle back = io::load_bundle(tmp.file("b.dapc"));

    CHECK(back.latent_dim == bundle.latent_dim);
    CHECK(back.dt == bundle.dt);
    CHECK(back.t_train_end == bundle.t_train_end);
    CHECK(back.t_end == bundle.t_end);
    CHECK(back.train_params == bundle.train_params);
    CHECK(back.field_layout == bundle.field_layout);
    CHECK(back.norm.mu_min == bundle.norm.mu_min);
    CHECK(back.norm.t_max == bundle.norm.t_max);

    std::vector<pipeline::Query> queries = {{0.02, 0.0},  {0.025, 0.6}, {0.03, 1.25},
                                            {0.021, 1.0}, {0.029, 0.3}};
    auto [a, fa] = pipeline::predict_online(bundle, queries);
    auto [b, fb] = pipeline::predict_online(back, queries);
    CHECK(a == b);
    CHECK(fa == fb);

    // Saving the loaded bundle again reproduces the file byte for byte.
    io::save_bundle(tmp.file("b2.dapc"), back);
    CHECK(io::read_text_file(tmp.file("b.dapc")) == io::read_text_file(tmp.file("b2.dapc")));

    io::write_text_file(tmp.file("junk.dapc"), "DAPX not a checkpoint");
    CHECK_THROWS_AS(io::load_bundle(tmp.file("junk.dapc")), IoError);
}

TEST_CASE("csv: header, formatting, and query loader") {
    TempDir tmp;
    io::write_csv(tmp.file("q.csv"), {"mu", "t"},
                  {{0.02, 0.0}, {0.03, 12.5}, {0.0275, 20.0}});
    std::string text = io::read_text_file(tmp.file("q.csv"));
    CHECK(text.rfind("mu,t\n", 0) == 0);
    CHECK(text.find("12.5") != std::string::npos);

    std::vector<pipeline::Query> qs = io::load_queries_csv(tmp.file("q.csv"));
    REQUIRE(qs.size() == 3);
    CHECK(qs[0].mu == 0.02);
    CHECK(qs[1].t == 12.5);
    CHECK(qs[2].mu == 0.0275);
    CHECK(qs[2].t == 20.0);

    io::write_text_file(tmp.file("bad.csv"), "mu,t\n0.02,notanumber\n");
    CHECK_THROWS_AS(io::load_queries_csv(tmp.file("bad.csv")), IoError);
}

TEST_CASE("csv: full double round trip precision") {
    TempDir tmp;
    const double tricky = 0.1234567890123456789;
    io::write_csv(tmp.file("p.csv"), {"x"}, {{tricky}});
    std::vector<pipeline::Query> qs;  // reuse the query loader via two columns
    io::write_csv(tmp.file("q.csv"), {"mu", "t"}, {{tricky, 1.0 / 3.0}});
    qs = io::load_queries_csv(tmp.file("q.csv"));
    REQUIRE(qs.size() == 1);
    CHECK(qs[0].mu == tricky);
    CHECK(qs[0].t == 1.0 / 3.0);
}

TEST_CASE("config: render/parse round trip") {
    config::RunConfig cfg = config::RunConfig::desk_scale();
    cfg.seed = 99;
    cfg.time_stride = 8;
    std::string text = config::render_config(cfg);
    config::RunConfig back = config::parse_config(text);
    CHECK(back.seed == 99);
    CHECK(back.time_stride == 8);
    CHECK(back.kdmd_stride == cfg.kdmd_stride);
    CHECK(back.fom.grid_points_per_field == cfg.fom.grid_points_per_field);
    CHECK(back.fom.epsilon_train == cfg.fom.epsilon_train);
    CHECK(back.cae.conv_filters == cfg.cae.conv_filters);
    CHECK(back.ffnn.hidden_units == cfg.ffnn.hidden_units);
    CHECK(back.kernel.gaussian_gamma == cfg.kernel.gaussian_gamma);
    CHECK(back.cae_train.epochs == cfg.cae_train.epochs);
    CHECK(back.joint_train.alpha == cfg.joint_train.alpha);
    // Re-render is stable.
    CHECK(config::render_config(back) == text);
}

TEST_CASE("config: unknown keys are hard errors naming the path") {
    config::RunConfig cfg = config::RunConfig::desk_scale();
    nlohmann::json j = nlohmann::json::parse(config::render_config(cfg));
    j["fom"]["grid_pointz"] = 64;
    try {
        config::parse_config(j.dump());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("grid_pointz") != std::string::npos);
        CHECK(msg.find("fom") != std::string::npos);
    }

    nlohmann::json top = nlohmann::json::parse(config::render_config(cfg));
    top["bogus"] = 1;
    CHECK_THROWS_AS(config::parse_config(top.dump()), ConfigError);
}

TEST_CASE("config: presets and validation") {
    config::RunConfig desk = config::RunConfig::desk_scale();
    CHECK(desk.fom.grid_points_per_field == 128);
    CHECK(desk.fom.epsilon_train.size() == 7);
    CHECK(desk.fom.epsilon_train.front() == 0.01);
    CHECK(desk.fom.epsilon_train.back() == 0.04);
    CHECK(desk.fom.epsilon_test.size() == 3);
    desk.validate();

    config::RunConfig paper = config::RunConfig::paper_scale();
    CHECK(paper.fom.grid_points_per_field == 512);
    CHECK(paper.fom.epsilon_train.size() == 31);
    CHECK(paper.fom.epsilon_test.size() == 10);
    CHECK(paper.cae.conv_filters == std::vector<int>({30, 25, 20, 15, 10}));
    paper.validate();

    // Preset key in JSON selects the baseline before overrides apply.
    config::RunConfig via = config::parse_config(R"({"preset": "desk_scale", "seed": 7})");
    CHECK(via.fom.grid_points_per_field == 128);
    CHECK(via.seed == 7);

    config::RunConfig bad = config::RunConfig::desk_scale();
    bad.time_stride = 7;  // does not divide the training grid
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    config::RunConfig bad2 = config::RunConfig::desk_scale();
    bad2.kdmd_stride = 3;  // does not divide time_stride = 8
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}

TEST_CASE("config: file round trip") {
    TempDir tmp;
    config::RunConfig cfg = config::RunConfig::desk_scale();
    cfg.output_dir = "results";
    config::save_config(cfg, tmp.file("cfg.json"));
    config::RunConfig back = config::load_config(tmp.file("cfg.json"));
    CHECK(back.output_dir == "results");
    CHECK(config::render_config(back) == config::render_config(cfg));
    CHECK_THROWS_AS(config::load_config(tmp.file("nope.json")), IoError);
}
