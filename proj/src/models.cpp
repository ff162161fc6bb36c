#include "ricc/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace ricc {

namespace {

constexpr std::size_t kFullFilters[] = {32, 64, 128, 256, 512};
constexpr std::size_t kResolutions[] = {16, 16, 8, 4, 2};

ArchDescriptor base_arch(ArchId id, std::size_t channels, std::size_t side, std::size_t divisor,
                         std::size_t convs) {
    if (divisor == 0) throw std::invalid_argument("width divisor must be positive");
    ArchDescriptor a;
    a.id = id;
    a.input_side = side;
    a.input_channels = channels;
    a.model_side = 32;
    a.stem_filters = channels;
    for (std::size_t j = 0; j < 5; ++j) {
        std::size_t f = kFullFilters[j] / divisor;
        if (f == 0) throw std::invalid_argument("width divisor leaves a block with no filters");
        a.blocks.push_back({kResolutions[j], f, convs});
    }
    a.validate();
    return a;
}

std::string block_key(const char* side, std::size_t j) {
    return std::string(side) + ".block" + std::to_string(j);
}

// Portable uniform in [-bound, bound) from raw 64-bit draws.
template <typename Real>
BasicTensor<Real> kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
    const double bound = gain * std::sqrt(3.0 / double(fan_in));
    std::vector<Real> v(numel(shape));
    for (auto& x : v) {
        double u = double(rng() >> 11) * 0x1.0p-53;
        x = Real((2.0 * u - 1.0) * bound);
    }
    return BasicTensor<Real>(std::move(shape), std::move(v));
}

template <typename Real>
void add_conv(BasicParamSet<Real>& p, const std::string& name, std::size_t out, std::size_t in,
              std::mt19937_64& rng) {
    p.add(name + ".w", kaiming_uniform<Real>({out, in, 3, 3}, in * 9, rng), true);
    p.add(name + ".b", BasicTensor<Real>::zeros({out}), true);
}

// Transposed conv weight is [in, out, 3, 3].
template <typename Real>
void add_tconv(BasicParamSet<Real>& p, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng) {
    p.add(name + ".w", kaiming_uniform<Real>({in, out, 3, 3}, in * 9, rng), true);
    p.add(name + ".b", BasicTensor<Real>::zeros({out}), true);
}

template <typename Real>
void add_bn(BasicParamSet<Real>& p, const std::string& name, std::size_t c) {
    p.add(name + ".gamma", BasicTensor<Real>::full({c}, Real(1)), true);
    p.add(name + ".beta", BasicTensor<Real>::zeros({c}), true);
    p.add(name + ".mean", BasicTensor<Real>::zeros({c}), false);
    p.add(name + ".var", BasicTensor<Real>::full({c}, Real(1)), false);
}

bool downsamples(const ArchDescriptor& a, std::size_t j) {
    std::size_t prev = j == 0 ? a.model_side : a.blocks[j - 1].resolution;
    return a.blocks[j].resolution < prev;
}

std::size_t filters_before(const ArchDescriptor& a, std::size_t j) {
    return j == 0 ? a.stem_filters : a.blocks[j - 1].filters;
}

template <typename Real>
BasicTensor<Real> bn(BasicModel<Real>& m, const std::string& name, const BasicTensor<Real>& x,
                     BnMode mode) {
    auto& p = m.params;
    return batch_norm(x, p.at(name + ".gamma"), p.at(name + ".beta"), p.at(name + ".mean"),
                      p.at(name + ".var"), mode);
}

}  // namespace

ArchDescriptor ArchDescriptor::ri_ra(std::size_t input_channels, std::size_t input_side,
                                     std::size_t width_divisor) {
    auto a = base_arch(ArchId::ri_ra, input_channels, input_side, width_divisor, 3);
    a.downsample = Downsample::stride_conv;
    a.skip_connections = false;
    return a;
}

ArchDescriptor ArchDescriptor::nri(std::size_t input_channels, std::size_t input_side,
                                   std::size_t width_divisor) {
    auto a = base_arch(ArchId::nri, input_channels, input_side, width_divisor, 2);
    a.downsample = Downsample::max_pool;
    a.skip_connections = true;
    return a;
}

void ArchDescriptor::validate() const {
    if (input_channels == 0 || stem_filters == 0) throw std::invalid_argument("architecture: zero channels");
    if (model_side == 0 || input_side < model_side || input_side % model_side != 0)
        throw std::invalid_argument("architecture: input side " + std::to_string(input_side) +
                                    " is not a multiple of the model side " + std::to_string(model_side));
    if (blocks.empty()) throw std::invalid_argument("architecture: no blocks");
    std::size_t res = model_side;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        const auto& b = blocks[j];
        if (b.filters == 0 || b.convs == 0)
            throw std::invalid_argument("architecture: block " + std::to_string(j) + " is empty");
        if (b.resolution != res && b.resolution * 2 != res)
            throw std::invalid_argument("architecture: block " + std::to_string(j) +
                                        " must keep or halve the resolution");
        res = b.resolution;
    }
}

Shape ArchDescriptor::input_shape(std::size_t n) const {
    return {n, input_channels, input_side, input_side};
}

Shape ArchDescriptor::latent_shape(std::size_t n) const {
    const auto& b = blocks.back();
    return {n, b.filters, b.resolution, b.resolution};
}

std::size_t ArchDescriptor::latent_dim() const {
    const auto& b = blocks.back();
    return b.filters * b.resolution * b.resolution;
}

std::string ArchDescriptor::to_json() const {
    nlohmann::json j;
    j["arch"] = std::string(to_string(id));
    j["input_side"] = input_side;
    j["input_channels"] = input_channels;
    j["model_side"] = model_side;
    j["stem_filters"] = stem_filters;
    j["downsample"] = downsample == Downsample::stride_conv ? "stride_conv" : "max_pool";
    j["skip_connections"] = skip_connections;
    auto& arr = j["blocks"] = nlohmann::json::array();
    for (const auto& b : blocks) arr.push_back({b.resolution, b.filters, b.convs});
    return j.dump();
}

ArchDescriptor ArchDescriptor::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ArchDescriptor a;
    a.id = arch_id_from_string(j.at("arch").get<std::string>());
    a.input_side = j.at("input_side").get<std::size_t>();
    a.input_channels = j.at("input_channels").get<std::size_t>();
    a.model_side = j.at("model_side").get<std::size_t>();
    a.stem_filters = j.at("stem_filters").get<std::size_t>();
    auto ds = j.at("downsample").get<std::string>();
    if (ds == "stride_conv") a.downsample = Downsample::stride_conv;
    else if (ds == "max_pool") a.downsample = Downsample::max_pool;
    else throw std::invalid_argument("architecture: unknown downsample '" + ds + "'");
    a.skip_connections = j.at("skip_connections").get<bool>();
    for (const auto& b : j.at("blocks"))
        a.blocks.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>(), b.at(2).get<std::size_t>()});
    a.validate();
    return a;
}

template <typename Real>
BasicModel<Real> init_model(const ArchDescriptor& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    BasicModel<Real> m{arch, BasicParamSet<Real>(arch.id)};
    auto& p = m.params;

    add_conv(p, "enc.stem", arch.stem_filters, arch.input_channels, rng);
    for (std::size_t j = 0; j < arch.blocks.size(); ++j) {
        const auto& b = arch.blocks[j];
        auto key = block_key("enc", j);
        for (std::size_t l = 0; l < b.convs; ++l)
            add_conv(p, key + ".conv" + std::to_string(l), b.filters, l == 0 ? filters_before(arch, j) : b.filters, rng);
        add_bn(p, key + ".bn", b.filters);
    }
    for (std::size_t jj = arch.blocks.size(); jj-- > 0;) {
        const auto& b = arch.blocks[jj];
        auto key = block_key("dec", jj);
        for (std::size_t l = 0; l + 1 < b.convs; ++l)
            add_conv(p, key + ".conv" + std::to_string(l), b.filters, b.filters, rng);
        auto last = key + ".conv" + std::to_string(b.convs - 1);
        std::size_t out = filters_before(arch, jj);
        if (downsamples(arch, jj)) add_tconv(p, last, b.filters, out, rng);
        else add_conv(p, last, out, b.filters, rng);
        add_bn(p, key + ".bn", out);
    }
    add_conv(p, "dec.out", arch.input_channels, arch.stem_filters, rng);
    return m;
}

template <typename Real>
BasicTensor<Real> encode(BasicModel<Real>& model, const BasicTensor<Real>& x, BnMode mode) {
    const auto& a = model.arch;
    auto& p = model.params;
    if (x.rank() != 4 || x.dim(1) != a.input_channels || x.dim(2) != a.input_side || x.dim(3) != a.input_side)
        throw ShapeError("encode: expected [N, " + std::to_string(a.input_channels) + ", " +
                         std::to_string(a.input_side) + ", " + std::to_string(a.input_side) + "], got " +
                         shape_str(x.shape()));
    auto h = x;
    if (a.input_side > a.model_side) h = avg_pool(h, int(a.input_side / a.model_side));
    h = leaky_relu(conv2d(h, p.at("enc.stem.w"), p.at("enc.stem.b"), 1, 1));

    for (std::size_t j = 0; j < a.blocks.size(); ++j) {
        const auto& b = a.blocks[j];
        auto key = block_key("enc", j);
        bool down = downsamples(a, j);
        if (down && a.downsample == Downsample::max_pool) h = max_pool2(h);
        auto block_in = h;
        for (std::size_t l = 0; l < b.convs; ++l) {
            auto name = key + ".conv" + std::to_string(l);
            int stride = (down && l == 0 && a.downsample == Downsample::stride_conv) ? 2 : 1;
            h = conv2d(h, p.at(name + ".w"), p.at(name + ".b"), stride, 1);
            if (l + 1 == b.convs) {
                h = bn(model, key + ".bn", h, mode);
                if (a.skip_connections && block_in.dim(2) == h.dim(2)) h = add_skip(h, block_in);
            }
            h = leaky_relu(h);
        }
    }
    return h;
}

template <typename Real>
BasicTensor<Real> decode(BasicModel<Real>& model, const BasicTensor<Real>& z, BnMode mode) {
    const auto& a = model.arch;
    auto& p = model.params;
    std::size_t n = z.rank() > 0 ? z.dim(0) : 0;
    if (z.shape() != a.latent_shape(n))
        throw ShapeError("decode: expected latent " + shape_str(a.latent_shape(n)) + ", got " + shape_str(z.shape()));

    auto h = z;
    for (std::size_t j = a.blocks.size(); j-- > 0;) {
        const auto& b = a.blocks[j];
        auto key = block_key("dec", j);
        auto block_in = h;
        for (std::size_t l = 0; l + 1 < b.convs; ++l) {
            auto name = key + ".conv" + std::to_string(l);
            h = conv2d(h, p.at(name + ".w"), p.at(name + ".b"), 1, 1);
            if (a.skip_connections && l + 2 == b.convs) h = add_skip(h, block_in);
            h = leaky_relu(h);
        }
        auto name = key + ".conv" + std::to_string(b.convs - 1);
        if (downsamples(a, j)) h = transpose_conv2d(h, p.at(name + ".w"), p.at(name + ".b"), 2, 1);
        else h = conv2d(h, p.at(name + ".w"), p.at(name + ".b"), 1, 1);
        h = leaky_relu(bn(model, key + ".bn", h, mode));
    }
    h = conv2d(h, p.at("dec.out.w"), p.at("dec.out.b"), 1, 1);
    if (a.input_side > a.model_side) h = upsample_nearest(h, int(a.input_side / a.model_side));
    return h;
}

template BasicModel<float> init_model(const ArchDescriptor&, std::uint64_t);
template BasicModel<double> init_model(const ArchDescriptor&, std::uint64_t);
template Tensor encode(BasicModel<float>&, const Tensor&, BnMode);
template Tensor64 encode(BasicModel<double>&, const Tensor64&, BnMode);
template Tensor decode(BasicModel<float>&, const Tensor&, BnMode);
template Tensor64 decode(BasicModel<double>&, const Tensor64&, BnMode);

}  // namespace ricc
