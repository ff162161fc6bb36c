#include "ricc/train.hpp"

#include <malloc.h>

#include <chrono>
#include <cmath>

#include "ricc/data.hpp"

namespace ricc {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::uint64_t s = seed;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[std::size_t(unit_uniform(s) * double(i))]);
    return idx;
}

// Identity plus `k` distinct non-identity angles of `full`.
RotationSet sample_rotations(const RotationSet& full, std::size_t k, std::uint64_t& state) {
    std::vector<double> rest(full.angles.begin() + 1, full.angles.end());
    if (k == 0 || k >= rest.size()) return full;
    for (std::size_t i = 0; i < k; ++i)
        std::swap(rest[i], rest[i + std::size_t(unit_uniform(state) * double(rest.size() - i))]);
    std::vector<double> pick(rest.begin(), rest.begin() + long(k));
    std::sort(pick.begin(), pick.end());
    pick.insert(pick.begin(), 0.0);
    return RotationSet{pick};
}

Tensor gather_images(const std::vector<Image>& data, const std::vector<std::size_t>& order, std::size_t begin,
                     std::size_t end) {
    std::vector<Image> imgs;
    imgs.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) imgs.push_back(data[order[i]]);
    return to_batch(imgs);
}

}  // namespace

std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::ri: return "ri";
        case LossKind::nri: return "nri";
        case LossKind::ra: return "ra";
    }
    return "?";
}

LossKind loss_kind_from_string(std::string_view s) {
    if (s == "ri") return LossKind::ri;
    if (s == "nri") return LossKind::nri;
    if (s == "ra") return LossKind::ra;
    throw std::invalid_argument("unknown loss kind '" + std::string(s) + "' (expected ri, nri or ra)");
}

void TrainConfig::validate() const {
    if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    rotations.validate();
    if (loss == LossKind::ri) ri.validate();
    if (loss == LossKind::ra) {
        ra.validate();
        if (ra_replicas < 2) throw std::invalid_argument("RA training needs at least 2 replicas");
        if (ra_groups == 0) throw std::invalid_argument("RA training needs at least 1 group");
    }
}

std::vector<EpochStats> train(Model& model, const std::vector<Image>& data, const TrainConfig& config) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    std::vector<Image> masked;
    masked.reserve(data.size());
    for (const auto& img : data) masked.push_back(circular_mask(img));
    const double pixels = double(masked[0].data.size());

    std::vector<EpochStats> trace;
    std::uint64_t rot_state = mix_seed(config.seed, 0x10);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochStats st;
        st.epoch = epoch;
        auto order = shuffled(masked.size(), mix_seed(config.seed, 0x20 + epoch));
        const std::size_t step_items = config.loss == LossKind::ra ? config.ra_groups : config.batch_size;
        for (std::size_t begin = 0; begin < masked.size(); begin += step_items) {
            const std::size_t end = std::min(masked.size(), begin + step_items);
            Tensor loss, a, b;
            double batch_pixels = 0;
            if (config.loss == LossKind::ra) {
                if (end - begin < 1) break;
                std::vector<Image> items;
                for (std::size_t i = begin; i < end; ++i) items.push_back(masked[order[i]]);
                auto mb = build_ra_minibatch(items, items.size(), config.ra_replicas,
                                             mix_seed(config.seed, (epoch << 32) + begin));
                auto p = ra_loss_parts(model, mb.batch, config.ra_replicas, config.rotations, config.ra, BnMode::train);
                loss = p.total;
                a = p.agnostic;
                b = p.bottleneck;
                batch_pixels = double(mb.batch.dim(0)) * pixels;
            } else {
                if (end - begin < 2) continue;  // batch norm needs two samples
                auto x = gather_images(masked, order, begin, end);
                batch_pixels = double(end - begin) * pixels;
                if (config.loss == LossKind::ri) {
                    auto inv_set = sample_rotations(config.rotations, config.inv_subsample, rot_state);
                    auto p = ri_loss_parts(model, x, config.rotations, config.ri, BnMode::train, &inv_set);
                    // Rescale so the subsampled l_inv estimates the full one.
                    const double full = double(config.rotations.size());
                    const double used = double(inv_set.size());
                    const double c = inv_set.size() == config.rotations.size()
                                         ? 1.0
                                         : (used / (used - 1.0)) * ((full - 1.0) / full);
                    a = scale(p.inv, c);
                    b = p.res;
                    loss = add(scale(a, config.ri.lambda_inv), scale(b, config.ri.lambda_res));
                } else {
                    auto recon = reconstruct(model, x, BnMode::train);
                    auto p = nri_terms(x, recon);
                    loss = p.total;
                    a = p.l1;
                    b = p.l2;
                }
            }
            const double value = loss.item();
            if (!std::isfinite(value)) {
                st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                trace.push_back(st);
                throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                           std::to_string(st.steps),
                                       trace);
            }
            model.params.zero_grad();
            backward(scale(loss, 1.0 / batch_pixels));
            sgd_step(model.params, config.lr);
            st.loss += value / batch_pixels;
            st.part_a += a.item() / batch_pixels;
            st.part_b += b.item() / batch_pixels;
            ++st.steps;
        }
        if (st.steps > 0) {
            st.loss /= double(st.steps);
            st.part_a /= double(st.steps);
            st.part_b /= double(st.steps);
        }
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trace.push_back(st);
        if (config.on_epoch) config.on_epoch(st);
    }
    return trace;
}

Points encode_all(Model& model, const std::vector<Image>& images, std::size_t batch_size) {
    NoGradGuard guard;
    Points out;
    out.reserve(images.size());
    for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
        const std::size_t end = std::min(images.size(), begin + batch_size);
        std::vector<Image> chunk(images.begin() + long(begin), images.begin() + long(end));
        auto z = encode(model, circular_mask(to_batch(chunk)), BnMode::eval);
        const std::size_t d = z.numel() / z.dim(0);
        for (std::size_t i = 0; i < z.dim(0); ++i) out.emplace_back(z.data().begin() + long(i * d), z.data().begin() + long((i + 1) * d));
    }
    return out;
}

std::vector<Image> reconstruct_all(Model& model, const std::vector<Image>& images, std::size_t batch_size) {
    NoGradGuard guard;
    std::vector<Image> out;
    out.reserve(images.size());
    for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
        const std::size_t end = std::min(images.size(), begin + batch_size);
        std::vector<Image> chunk(images.begin() + long(begin), images.begin() + long(end));
        for (auto& img : from_batch(reconstruct(model, circular_mask(to_batch(chunk)), BnMode::eval)))
            out.push_back(std::move(img));
    }
    return out;
}

double mean_restoration_loss(Model& model, const std::vector<Image>& images, const RotationSet& rotations,
                             std::size_t batch_size) {
    NoGradGuard guard;
    double total = 0, pixels = 0;
    for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
        const std::size_t end = std::min(images.size(), begin + batch_size);
        std::vector<Image> chunk(images.begin() + long(begin), images.begin() + long(end));
        auto x = circular_mask(to_batch(chunk));
        total += restoration_term(x, reconstruct(model, x, BnMode::eval), rotations).item();
        pixels += double(x.numel());
    }
    return total / pixels;
}

void tune_allocator() {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
}

}  // namespace ricc
