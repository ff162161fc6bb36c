#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "ricc/checkpoint.hpp"
#include "ricc/models.hpp"
#include "test_util.hpp"

using namespace ricc;
using ricc::testing::random_images;
using ricc::testing::tiny_arch;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "ricc_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(b.data(), std::streamsize(b.size()));
}

}  // namespace

TEST_CASE("reference architectures") {
    auto ri = ArchDescriptor::ri_ra(1);
    REQUIRE(ri.blocks.size() == 5);
    const BlockSpec expect_ri[] = {{16, 32, 3}, {16, 64, 3}, {8, 128, 3}, {4, 256, 3}, {2, 512, 3}};
    for (std::size_t j = 0; j < 5; ++j) CHECK(ri.blocks[j] == expect_ri[j]);
    CHECK(ri.model_side == 32);
    CHECK(ri.stem_filters == 1);
    CHECK(ri.downsample == Downsample::stride_conv);
    CHECK_FALSE(ri.skip_connections);
    CHECK(ri.latent_shape(3) == Shape{3, 512, 2, 2});
    CHECK(ri.latent_dim() == 2048);

    auto nri = ArchDescriptor::nri(6, 128);
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(nri.blocks[j].convs == 2);
        CHECK(nri.blocks[j].filters == expect_ri[j].filters);
    }
    CHECK(nri.stem_filters == 6);
    CHECK(nri.downsample == Downsample::max_pool);
    CHECK(nri.skip_connections);
    CHECK(nri.input_shape(2) == Shape{2, 6, 128, 128});

    auto small = ArchDescriptor::ri_ra(1, 32, 8);
    CHECK(small.blocks[0].filters == 4);
    CHECK(small.blocks[4].filters == 64);

    CHECK_THROWS(ArchDescriptor::ri_ra(1, 48));
    CHECK_THROWS(ArchDescriptor::ri_ra(1, 32, 1024));
    CHECK(ArchDescriptor::from_json(nri.to_json()) == nri);
}

TEST_CASE("forward shapes and determinism") {
    for (auto arch : {ArchDescriptor::ri_ra(1, 32, 8), ArchDescriptor::nri(3, 64, 8)}) {
        auto m = init_model<float>(arch, 1);
        auto x = random_images<float>(arch.input_shape(2), 2);
        NoGradGuard guard;
        auto z = encode(m, x, BnMode::eval);
        CHECK(z.shape() == arch.latent_shape(2));
        auto y = decode(m, z, BnMode::eval);
        CHECK(y.shape() == x.shape());
        auto y2 = reconstruct(m, x, BnMode::eval);
        CHECK(std::memcmp(y.data().data(), y2.data().data(), y.numel() * sizeof(float)) == 0);
    }
    auto a = init_model<float>(ArchDescriptor::ri_ra(1, 32, 8), 5);
    auto b = init_model<float>(ArchDescriptor::ri_ra(1, 32, 8), 5);
    auto c = init_model<float>(ArchDescriptor::ri_ra(1, 32, 8), 6);
    CHECK(a.params.at("enc.block2.conv1.w").data()[7] == b.params.at("enc.block2.conv1.w").data()[7]);
    CHECK(a.params.at("enc.block2.conv1.w").data()[7] != c.params.at("enc.block2.conv1.w").data()[7]);
}

TEST_CASE("kaiming uniform bound") {
    auto m = init_model<double>(ArchDescriptor::ri_ra(1, 32, 8), 3);
    const double gain = std::sqrt(2.0 / (1.0 + 0.09));
    const auto& w = m.params.at("enc.block1.conv0.w");
    const double bound = gain * std::sqrt(3.0 / double(w.shape()[1] * 9));
    double mx = 0;
    for (double v : w.data()) mx = std::max(mx, std::abs(v));
    CHECK(mx <= bound);
    CHECK(mx > 0.9 * bound);
    for (double v : m.params.at("enc.block1.conv0.b").data()) CHECK(v == 0.0);
}

TEST_CASE("training a tiny autoencoder lowers the reconstruction error") {
    auto m = init_model<float>(tiny_arch(ArchId::ri_ra), 7);
    auto x = random_images<float>({8, 1, 8, 8}, 8);
    auto err = [&] {
        NoGradGuard guard;
        return sum(sq_dist_per_sample(reconstruct(m, x, BnMode::train), x)).item();
    };
    const double before = err();
    for (int step = 0; step < 200; ++step) {
        m.params.zero_grad();
        auto loss = scale(sum(sq_dist_per_sample(reconstruct(m, x, BnMode::train), x)), 1.0f / 512.0f);
        backward(loss);
        sgd_step(m.params, 0.05);
    }
    const double after = err();
    MESSAGE("error ", before, " -> ", after);
    CHECK(after < 0.5 * before);
}

TEST_CASE("checkpoint round trip and errors") {
    auto m = init_model<float>(ArchDescriptor::nri(2, 32, 8), 11);
    {
        auto x = random_images<float>(m.arch.input_shape(4), 12);
        reconstruct(m, x, BnMode::train);  // moves the running statistics
    }
    auto path = temp_file("round_trip.ricc");
    save_checkpoint(m, path);
    auto back = load_checkpoint(path, ArchId::nri);
    CHECK(back.arch == m.arch);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const auto& a = m.params.entries()[i];
        const auto& b = back.params.entries()[i];
        CHECK(a.name == b.name);
        CHECK(a.learnable == b.learnable);
        CHECK(a.tensor.shape() == b.tensor.shape());
        CHECK(std::memcmp(a.tensor.data().data(), b.tensor.data().data(), a.tensor.numel() * sizeof(float)) == 0);
    }
    save_checkpoint(back, temp_file("round_trip2.ricc"));
    CHECK(read_bytes(path) == read_bytes(temp_file("round_trip2.ricc")));

    CHECK_THROWS_AS(load_checkpoint(path, ArchId::ri_ra), ArchMismatch);

    auto bytes = read_bytes(path);
    auto bad = temp_file("bad.ricc");

    auto magic = bytes;
    magic[4] = 0x02;
    write_bytes(bad, magic);
    CHECK_THROWS_AS(load_checkpoint(bad), MagicMismatch);

    auto version = bytes;
    version[5] = 0x02;
    write_bytes(bad, version);
    CHECK_THROWS_AS(load_checkpoint(bad), VersionMismatch);

    write_bytes(bad, std::vector<char>(bytes.begin(), bytes.end() - 3));
    CHECK_THROWS_AS(load_checkpoint(bad), Truncated);
    write_bytes(bad, std::vector<char>(bytes.begin(), bytes.begin() + 7));
    CHECK_THROWS_AS(load_checkpoint(bad), Truncated);

    CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ricc")), CheckpointError);
}
