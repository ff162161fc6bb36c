#include <doctest.h>

#include "ricc/config.hpp"

using namespace ricc;

TEST_CASE("config defaults validate and round-trip through ini") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    const auto text = c.to_ini();
    CHECK(text.find("[experiment]\n") == 0);
    CHECK(text.find("\n[gridsearch]\n") != std::string::npos);
    auto back = ExperimentConfig::parse(text);
    CHECK(back.to_ini() == text);
    CHECK(back.hash() == c.hash());
    CHECK(c.hash().size() == 16);
}

TEST_CASE("config parse sets typed values") {
    auto c = ExperimentConfig::parse(
        "[experiment]\nname = mnist_ri\nseed = 7\nout = runs/x\n"
        "[data]\nkind = mnist\nside = 28\nchannels = 1\ncount = 9600\n"
        "[model]\narch = RI_RA_ARCH\n"
        "[train]\nloss = ri\nlambda_inv = 0.5\nlr = 0.001\nepochs = 3\n"
        "[evaluate]\nkernels = 1, 3,5\nmulticluster_original_vs_rotated = true\n"
        "cluster_counts = 10,20\nmulticluster_patches = 20\n");
    CHECK(c.name == "mnist_ri");
    CHECK(c.seed == 7);
    CHECK(c.out_dir == std::filesystem::path("runs/x"));
    CHECK(c.data.kind == DatasetKind::mnist);
    CHECK(c.data.channels == 1);
    CHECK(c.ri.lambda_inv == 0.5);
    CHECK(c.lr == 0.001);
    CHECK(c.kernels == std::vector<std::size_t>{1, 3, 5});
    CHECK(c.multicluster_original_vs_rotated);
    CHECK(c.arch_descriptor().model_side == 32);

    auto t = c.train_config();
    CHECK(t.epochs == 3);
    CHECK(t.loss == LossKind::ri);
    CHECK(t.rotations.size() == 12);
    CHECK(c.init_seed() != c.protocol_seed());
    CHECK(t.seed != c.init_seed());
}

TEST_CASE("config hash tracks every value") {
    ExperimentConfig a, b;
    b.lr = 0.030000001;
    CHECK(a.hash() != b.hash());
    b = a;
    b.thresholds.scrambling_max_ami = 0.6;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("config rejects malformed input") {
    CHECK_THROWS_AS(ExperimentConfig::parse("[bogus]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nlearning_rate = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nlr = fast\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nepochs = 3x\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nepochs = -3\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nloss = l2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nloss = nri\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[model]\narch = resnet\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[data]\nkind = mnist\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[data]\nside = 30\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[evaluate]\nreplicas = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[evaluate]\nmulticluster_original_vs_rotated = maybe\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[evaluate]\ncluster_counts = 6,500\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[evaluate]\nsmoothing_max_ami = 2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train\nlr = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("shipped configs parse") {
    const std::filesystem::path dir = std::filesystem::path(RICC_SOURCE_DIR) / "configs";
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".cfg") continue;
        CAPTURE(e.path().string());
        CHECK_NOTHROW(ExperimentConfig::load(e.path()));
        ++n;
    }
    CHECK(n >= 5);
}
