#include "isoseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "isoseg/kernels.hpp"
#include "isoseg/onehot.hpp"

namespace fs = std::filesystem;

namespace isoseg::train {

const char* sub_name(Sub s) {
    switch (s) {
    case Sub::Encode: return "Encode";
    case Sub::Decode: return "Decode";
    case Sub::Reencode: return "Reencode";
    case Sub::Redecode: return "Redecode";
    case Sub::Discriminate: return "Discriminate";
    case Sub::Supervision: return "Supervision";
    }
    return "?";
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
    kern::add(dst.numel(), dst.data(), src.data(), dst.data());
}

bool any_labeled(const data::Batch& b) {
    for (uint8_t f : b.labeled)
        if (f) return true;
    return false;
}

} // namespace

// ---------------------------------------------------------------------------
// Construction

uint64_t split_seed(uint64_t master_seed, const std::string& dataset_name) {
    return Rng(master_seed).child(Rng::fnv1a("split/" + dataset_name)).seed();
}
uint64_t label_seed(uint64_t master_seed, const std::string& dataset_name) {
    return Rng(master_seed).child(Rng::fnv1a("labels/" + dataset_name)).seed();
}

Trainer::Trainer(const cfg::ExperimentConfig& config, data::Registry& registry)
    : config_(config), reg_(registry) {
    const int n = reg_.size();
    if (n != static_cast<int>(config_.datasets.size()))
        throw std::runtime_error("registry/config dataset count mismatch");
    if (n < 2) throw cfg::ConfigError("training needs at least 2 datasets");

    image_size_ = reg_.image_size(0);
    for (int i = 1; i < n; ++i)
        if (reg_.image_size(i) != image_size_)
            throw cfg::ConfigError("all datasets must share one image size; \"" +
                                   reg_.descriptor(i).name + "\" differs");
    if (image_size_ % 4 != 0)
        throw cfg::ConfigError("image size must be divisible by 4");

    int labeled_total = 0;
    for (int i = 0; i < n; ++i) {
        const std::string& name = config_.datasets[i].name;
        splits_.push_back(data::make_split(reg_.sample_count(i),
                                           split_seed(config_.seed, name),
                                           config_.train.split_ratio));
        labeled_.push_back(data::apply_label_fraction(splits_[i].train_ids,
                                                      config_.datasets[i].label_fraction,
                                                      label_seed(config_.seed, name)));
        codes_.push_back(cond::encode_onehot(i, n));
        for (int id : labeled_[i])
            if (reg_.has_mask(i, id)) ++labeled_total;
    }
    if (labeled_total == 0)
        throw cfg::ConfigError("no labeled data: every training step would be unsupervised");

    build_models();
    loop_rng_ = Rng(config_.seed).child(Rng::fnv1a("train_loop"));
}

void Trainer::build_models() {
    gspec_.n_datasets = reg_.size();
    gspec_.base_filters = config_.train.base_filters;
    gspec_.residual_layers = config_.train.residual_layers;
    gspec_.style_dim =
        config_.train.latent_variant == "content-style" ? config_.train.style_dim : 0;

    enc_ = std::make_unique<net::Encoder>(gspec_);
    dec_ = std::make_unique<net::Decoder>(gspec_);
    dis_ = std::make_unique<net::Discriminator>(gspec_.n_datasets, gspec_.base_filters);
    seg_ = std::make_unique<net::SegmenterM>(enc_->content_channels());

    const Rng master(config_.seed);
    Rng r_enc = master.child(Rng::fnv1a("init/enc"));
    Rng r_dec = master.child(Rng::fnv1a("init/dec"));
    Rng r_dis = master.child(Rng::fnv1a("init/dis"));
    Rng r_seg = master.child(Rng::fnv1a("init/seg"));
    enc_->init(r_enc);
    dec_->init(r_dec);
    dis_->init(r_dis);
    seg_->init(r_seg);

    const float lr = static_cast<float>(config_.train.learning_rate);
    const float wd = static_cast<float>(config_.train.weight_decay);
    opt_g_ = std::make_unique<nn::Adam>(g_params(), lr, 0.5f, 0.999f, wd);
    opt_d_ = std::make_unique<nn::Adam>(d_params(), lr, 0.5f, 0.999f, wd);
    opt_m_ = std::make_unique<nn::Adam>(m_params(), lr, 0.5f, 0.999f, wd);
}

std::vector<nn::Param*> Trainer::g_params() {
    std::vector<nn::Param*> ps;
    enc_->collect_params(ps);
    dec_->collect_params(ps);
    return ps;
}
std::vector<nn::Param*> Trainer::d_params() {
    std::vector<nn::Param*> ps;
    dis_->collect_params(ps);
    return ps;
}
std::vector<nn::Param*> Trainer::m_params() {
    std::vector<nn::Param*> ps;
    seg_->collect_params(ps);
    return ps;
}

uint64_t Trainer::params_hash(const std::vector<nn::Param*>& ps) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, size_t bytes) {
        const unsigned char* c = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < bytes; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const nn::Param* p : ps)
        mix(p->w.data(), sizeof(float) * static_cast<size_t>(p->w.numel()));
    return h;
}

int Trainer::full_training_epochs() const {
    return static_cast<int>(
        std::ceil(config_.train.full_training_fraction * config_.train.epochs));
}

int Trainer::iterations_per_epoch() const {
    if (config_.train.iterations_per_epoch > 0) return config_.train.iterations_per_epoch;
    int max_train = 0;
    for (const auto& s : splits_) max_train = std::max(max_train, (int)s.train_ids.size());
    return (max_train + config_.train.batch_size - 1) / config_.train.batch_size;
}

data::Batch Trainer::draw_batch(int dataset_id) {
    return data::make_batch(reg_, dataset_id, splits_[dataset_id].train_ids,
                            labeled_[dataset_id], config_.train.batch_size, loop_rng_);
}

// ---------------------------------------------------------------------------
// Routine steps

loss::LossBreakdown Trainer::step_dis_update(const data::Batch& a, const data::Batch& b) {
    const cond::OneHotCode &ha = codes_[a.dataset_id], &hb = codes_[b.dataset_id];
    const bool styled = gspec_.style_dim > 0;
    opt_d_->zero_grad();

    // The generator is frozen here: its passes run without gradient state.
    nn::Ctx ng;
    ng.grad = false;
    trace_.emit(Sub::Encode);
    net::LatentCode lat_a = enc_->forward(a.images, ha, ng);
    net::LatentCode lat_b = enc_->forward(b.images, hb, ng);

    trace_.emit(Sub::Decode);
    Tensor style_tb, style_ta;
    if (styled) {
        style_tb = net::sample_style(a.images.dim(0), gspec_.style_dim, loop_rng_);
        style_ta = net::sample_style(b.images.dim(0), gspec_.style_dim, loop_rng_);
    }
    Tensor x_ab = dec_->forward(lat_a.content, hb, styled ? &style_tb : nullptr, ng);
    Tensor x_ba = dec_->forward(lat_b.content, ha, styled ? &style_ta : nullptr, ng);

    trace_.emit(Sub::Discriminate);
    nn::Ctx ctx;
    Tensor s_real_b = dis_->forward(b.images, hb, ctx);
    Tensor s_fake_b = dis_->forward(x_ab, hb, ctx);
    Tensor s_real_a = dis_->forward(a.images, ha, ctx);
    Tensor s_fake_a = dis_->forward(x_ba, ha, ctx);

    const double scale = config_.train.weights.lambda_adv;
    Tensor d_rb(s_real_b.shape()), d_fb(s_fake_b.shape());
    Tensor d_ra(s_real_a.shape()), d_fa(s_fake_a.shape());
    loss::LossBreakdown l;
    l.adv_d = loss::adversarial_d(s_real_b, s_fake_b, scale, &d_rb, &d_fb) +
              loss::adversarial_d(s_real_a, s_fake_a, scale, &d_ra, &d_fa);

    dis_->backward(d_fa, ctx, false);
    dis_->backward(d_ra, ctx, false);
    dis_->backward(d_fb, ctx, false);
    dis_->backward(d_rb, ctx, false);
    opt_d_->step();

    return loss::total_coda(l, config_.train.weights);
}

loss::LossBreakdown Trainer::step_gen_update(const data::Batch& a, const data::Batch& b) {
    const cond::OneHotCode &ha = codes_[a.dataset_id], &hb = codes_[b.dataset_id];
    const bool styled = gspec_.style_dim > 0;
    const loss::LossWeights& w = config_.train.weights;
    opt_g_->zero_grad();

    nn::Ctx ctx;
    trace_.emit(Sub::Encode);
    net::LatentCode lat_a = enc_->forward(a.images, ha, ctx); // enc #1
    net::LatentCode lat_b = enc_->forward(b.images, hb, ctx); // enc #2

    trace_.emit(Sub::Decode);
    Tensor style_tb, style_ta;
    if (styled) {
        style_tb = net::sample_style(a.images.dim(0), gspec_.style_dim, loop_rng_);
        style_ta = net::sample_style(b.images.dim(0), gspec_.style_dim, loop_rng_);
    }
    Tensor x_ab = dec_->forward(lat_a.content, hb, styled ? &style_tb : nullptr, ctx); // dec #1
    Tensor x_ba = dec_->forward(lat_b.content, ha, styled ? &style_ta : nullptr, ctx); // dec #2
    // Least-squares generator scores on the fresh translations. D is frozen
    // in this routine: its gradients are discarded at its next zero_grad.
    Tensor s_ab = dis_->forward(x_ab, hb, ctx); // dis #1
    Tensor s_ba = dis_->forward(x_ba, ha, ctx); // dis #2

    trace_.emit(Sub::Reencode);
    net::LatentCode lat_ab = enc_->forward(x_ab, hb, ctx); // enc #3
    net::LatentCode lat_ba = enc_->forward(x_ba, ha, ctx); // enc #4

    trace_.emit(Sub::Redecode);
    Tensor x_aba = dec_->forward(lat_ab.content, ha, styled ? &lat_a.style : nullptr, ctx); // dec #3
    Tensor x_bab = dec_->forward(lat_ba.content, hb, styled ? &lat_b.style : nullptr, ctx); // dec #4

    loss::LossBreakdown l;
    Tensor d_xaba(x_aba.shape()), d_xbab(x_bab.shape());
    l.cyc = loss::cycle_l1(a.images, x_aba, w.lambda_cyc, &d_xaba) +
            loss::cycle_l1(b.images, x_bab, w.lambda_cyc, &d_xbab);

    Tensor d_sab(s_ab.shape()), d_sba(s_ba.shape());
    l.adv_g = loss::adversarial_g(s_ab, w.lambda_adv, &d_sab) +
              loss::adversarial_g(s_ba, w.lambda_adv, &d_sba);

    Tensor d_ca(lat_a.content.shape()), d_cb(lat_b.content.shape());
    Tensor d_cab(lat_ab.content.shape()), d_cba(lat_ba.content.shape());
    Tensor d_sab_style, d_sba_style, d_sa_style, d_sb_style;
    if (styled) {
        d_sab_style = Tensor(lat_ab.style.shape());
        d_sba_style = Tensor(lat_ba.style.shape());
        d_sa_style = Tensor(lat_a.style.shape());
        d_sb_style = Tensor(lat_b.style.shape());
        l.latent_recon =
            loss::latent_recon(lat_a.content, lat_ab.content, w.lambda_latent, &d_ca, &d_cab) +
            loss::latent_recon(lat_b.content, lat_ba.content, w.lambda_latent, &d_cb, &d_cba) +
            loss::latent_recon(style_tb, lat_ab.style, w.lambda_latent, nullptr, &d_sab_style) +
            loss::latent_recon(style_ta, lat_ba.style, w.lambda_latent, nullptr, &d_sba_style);
    }

    // Reverse sweep; per-layer stashes are LIFO so instance order must mirror
    // the forward order exactly.
    Tensor d_cba1 = dec_->backward(d_xbab, ctx, true, styled ? &d_sb_style : nullptr); // dec #4
    Tensor d_cab1 = dec_->backward(d_xaba, ctx, true, styled ? &d_sa_style : nullptr); // dec #3
    Tensor d_xba_adv = dis_->backward(d_sba, ctx, true);                               // dis #2
    Tensor d_xab_adv = dis_->backward(d_sab, ctx, true);                               // dis #1
    add_into(d_cba1, d_cba);
    Tensor d_xba_lat =
        enc_->backward(d_cba1, styled ? &d_sba_style : nullptr, ctx, true); // enc #4
    add_into(d_cab1, d_cab);
    Tensor d_xab_lat =
        enc_->backward(d_cab1, styled ? &d_sab_style : nullptr, ctx, true); // enc #3
    add_into(d_xba_adv, d_xba_lat);
    Tensor d_cb1 = dec_->backward(d_xba_adv, ctx, true, nullptr); // dec #2
    add_into(d_xab_adv, d_xab_lat);
    Tensor d_ca1 = dec_->backward(d_xab_adv, ctx, true, nullptr); // dec #1
    add_into(d_cb, d_cb1);
    enc_->backward(d_cb, styled ? &d_sb_style : nullptr, ctx, false); // enc #2
    add_into(d_ca, d_ca1);
    enc_->backward(d_ca, styled ? &d_sa_style : nullptr, ctx, false); // enc #1

    opt_g_->step();
    return loss::total_coda(l, config_.train.weights);
}

loss::LossBreakdown Trainer::step_model_update(const data::Batch& a, const data::Batch& b) {
    const cond::OneHotCode &ha = codes_[a.dataset_id], &hb = codes_[b.dataset_id];
    const bool styled = gspec_.style_dim > 0;
    const loss::LossWeights& w = config_.train.weights;
    const bool feedback = config_.train.sup_feedback_to_g && !in_supervision_tuning();
    const bool skip = config_.train.skip_masked_model_passes && !feedback;
    opt_m_->zero_grad();
    if (feedback) opt_g_->zero_grad();

    sup_activity_ = SupActivity{};
    sup_activity_.direct_a = sup_activity_.translated_a = any_labeled(a);
    sup_activity_.direct_b = sup_activity_.translated_b = any_labeled(b);
    const bool run_a = !skip || sup_activity_.direct_a;
    const bool run_b = !skip || sup_activity_.direct_b;

    // Styles are drawn before any skipping decision so the rng stream does
    // not depend on label availability.
    Tensor style_tb, style_ta;
    if (styled) {
        style_tb = net::sample_style(a.images.dim(0), gspec_.style_dim, loop_rng_);
        style_ta = net::sample_style(b.images.dim(0), gspec_.style_dim, loop_rng_);
    }

    loss::LossBreakdown l;
    if (!run_a && !run_b) {
        // Every supervised slot is masked: the optimizer still advances so
        // the parameter trajectory matches the unskipped execution exactly
        // (gradients are exact zeros there; only decay remains).
        opt_m_->step();
        return loss::total_coda(l, w);
    }

    nn::Ctx gctx; // generator-side passes
    gctx.grad = feedback;
    nn::Ctx mctx; // supervised-model passes

    trace_.emit(Sub::Encode);
    net::LatentCode lat_a, lat_b;
    if (run_a) lat_a = enc_->forward(a.images, ha, gctx); // enc #1
    if (run_b) lat_b = enc_->forward(b.images, hb, gctx); // enc #2

    trace_.emit(Sub::Decode);
    Tensor x_ab, x_ba;
    if (run_a) x_ab = dec_->forward(lat_a.content, hb, styled ? &style_tb : nullptr, gctx);
    if (run_b) x_ba = dec_->forward(lat_b.content, ha, styled ? &style_ta : nullptr, gctx);

    trace_.emit(Sub::Reencode);
    net::LatentCode lat_ab, lat_ba;
    if (run_a) lat_ab = enc_->forward(x_ab, hb, gctx); // enc #3
    if (run_b) lat_ba = enc_->forward(x_ba, ha, gctx); // enc #4

    if (!skip) {
        // Redecode feeds no supervised term; it runs for routine fidelity.
        trace_.emit(Sub::Redecode);
        dec_->forward(lat_ab.content, ha, styled ? &lat_a.style : nullptr, gctx); // dec #3
        dec_->forward(lat_ba.content, hb, styled ? &lat_b.style : nullptr, gctx); // dec #4
    }

    trace_.emit(Sub::Supervision);
    Tensor p_a, p_ab, p_b, p_ba;
    if (run_a) p_a = seg_->forward(lat_a.content, mctx);   // seg #1
    if (run_a) p_ab = seg_->forward(lat_ab.content, mctx); // seg #2
    if (run_b) p_b = seg_->forward(lat_b.content, mctx);   // seg #3
    if (run_b) p_ba = seg_->forward(lat_ba.content, mctx); // seg #4

    Tensor d_pa, d_pab, d_pb, d_pba;
    if (run_a) {
        d_pa = Tensor(p_a.shape());
        d_pab = Tensor(p_ab.shape());
        l.sup += loss::cross_entropy_masked(a.masks, p_a, a.labeled, w.lambda_sup, &d_pa);
        l.sup += loss::cross_entropy_masked(a.masks, p_ab, a.labeled, w.lambda_sup, &d_pab);
    }
    if (run_b) {
        d_pb = Tensor(p_b.shape());
        d_pba = Tensor(p_ba.shape());
        l.sup += loss::cross_entropy_masked(b.masks, p_b, b.labeled, w.lambda_sup, &d_pb);
        l.sup += loss::cross_entropy_masked(b.masks, p_ba, b.labeled, w.lambda_sup, &d_pba);
    }

    Tensor d_cba, d_cb, d_cab, d_ca;
    if (run_b) {
        d_cba = seg_->backward(d_pba, mctx, feedback); // seg #4
        d_cb = seg_->backward(d_pb, mctx, feedback);   // seg #3
    }
    if (run_a) {
        d_cab = seg_->backward(d_pab, mctx, feedback); // seg #2
        d_ca = seg_->backward(d_pa, mctx, feedback);   // seg #1
    }

    if (feedback) {
        // Alternative reading: the supervised loss also shapes G. The
        // redecode outputs carry no loss, so their sweep runs on zeros.
        Tensor zero_b(x_ba.shape()), zero_a(x_ab.shape());
        Tensor d_cba2 = dec_->backward(zero_b, gctx, true, nullptr);          // dec #4
        Tensor d_cab2 = dec_->backward(zero_a, gctx, true, nullptr);          // dec #3
        add_into(d_cba, d_cba2);
        add_into(d_cab, d_cab2);
        Tensor d_xba = enc_->backward(d_cba, nullptr, gctx, true);            // enc #4
        Tensor d_xab = enc_->backward(d_cab, nullptr, gctx, true);            // enc #3
        Tensor d_cb1 = dec_->backward(d_xba, gctx, true, nullptr);            // dec #2
        Tensor d_ca1 = dec_->backward(d_xab, gctx, true, nullptr);            // dec #1
        add_into(d_cb, d_cb1);
        enc_->backward(d_cb, nullptr, gctx, false);                           // enc #2
        add_into(d_ca, d_ca1);
        enc_->backward(d_ca, nullptr, gctx, false);                           // enc #1
        opt_g_->step();
    }

    opt_m_->step();
    return loss::total_coda(l, w);
}

// ---------------------------------------------------------------------------
// Probe

double Trainer::probe_cycle(const data::Batch& a, const data::Batch& b) {
    const cond::OneHotCode &ha = codes_[a.dataset_id], &hb = codes_[b.dataset_id];
    const bool styled = gspec_.style_dim > 0;
    nn::Ctx ng;
    ng.grad = false;

    Tensor zstyle_a, zstyle_b;
    if (styled) {
        zstyle_a = Tensor({a.images.dim(0), gspec_.style_dim, 1, 1});
        zstyle_b = Tensor({b.images.dim(0), gspec_.style_dim, 1, 1});
    }
    net::LatentCode lat_a = enc_->forward(a.images, ha, ng);
    net::LatentCode lat_b = enc_->forward(b.images, hb, ng);
    Tensor x_ab = dec_->forward(lat_a.content, hb, styled ? &zstyle_a : nullptr, ng);
    Tensor x_ba = dec_->forward(lat_b.content, ha, styled ? &zstyle_b : nullptr, ng);
    net::LatentCode lat_ab = enc_->forward(x_ab, hb, ng);
    net::LatentCode lat_ba = enc_->forward(x_ba, ha, ng);
    Tensor x_aba = dec_->forward(lat_ab.content, ha, styled ? &lat_a.style : nullptr, ng);
    Tensor x_bab = dec_->forward(lat_ba.content, hb, styled ? &lat_b.style : nullptr, ng);
    return 0.5 * (loss::l1_mean(a.images, x_aba) + loss::l1_mean(b.images, x_bab));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint32_t take_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t take_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string take_str(std::istream& is) {
    std::string s(take_u32(is), '\0');
    is.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}
void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    put_str(os, name);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
    put_u64(os, static_cast<uint64_t>(t.numel()));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(float) * t.numel()));
}
Tensor take_tensor(std::istream& is, std::string& name) {
    name = take_str(is);
    const uint32_t rank = take_u32(is);
    std::vector<int> shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(take_u32(is)));
    const uint64_t numel = take_u64(is);
    Tensor t(shape);
    if (static_cast<uint64_t>(t.numel()) != numel)
        throw std::runtime_error("checkpoint: tensor size mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(float) * t.numel()));
    return t;
}

constexpr char kCkptMagic[9] = "ISOCKPT1";

} // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kCkptMagic, 8);
    put_u32(os, 1u);
    put_u32(os, static_cast<uint32_t>(epoch_));
    put_u64(os, cfg::config_hash(config_));
    put_u64(os, static_cast<uint64_t>(opt_g_->steps()));
    put_u64(os, static_cast<uint64_t>(opt_d_->steps()));
    put_u64(os, static_cast<uint64_t>(opt_m_->steps()));
    put_str(os, loop_rng_.serialize());

    uint32_t count = 0;
    for (const nn::Adam* opt : {opt_g_.get(), opt_d_.get(), opt_m_.get()})
        count += static_cast<uint32_t>(opt->params().size()) * 3;
    put_u32(os, count);
    for (const nn::Adam* opt : {opt_g_.get(), opt_d_.get(), opt_m_.get()}) {
        const auto& ps = opt->params();
        for (size_t i = 0; i < ps.size(); ++i) {
            put_tensor(os, ps[i]->name, ps[i]->w);
            put_tensor(os, ps[i]->name + "#m", opt->m()[i]);
            put_tensor(os, ps[i]->name + "#v", opt->v()[i]);
        }
    }
    if (!os) throw std::runtime_error("checkpoint write failure: " + path);
}

void Trainer::load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kCkptMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    if (take_u32(is) != 1u) throw std::runtime_error("unsupported checkpoint version");
    epoch_ = static_cast<int>(take_u32(is));
    const uint64_t h = take_u64(is);
    if (h != cfg::config_hash(config_))
        std::cerr << "warning: checkpoint " << path
                  << " was written under a different config hash\n";
    const int64_t steps_g = static_cast<int64_t>(take_u64(is));
    const int64_t steps_d = static_cast<int64_t>(take_u64(is));
    const int64_t steps_m = static_cast<int64_t>(take_u64(is));
    loop_rng_.deserialize(take_str(is));

    std::map<std::string, Tensor> blobs;
    const uint32_t count = take_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name;
        Tensor t = take_tensor(is, name);
        blobs.emplace(std::move(name), std::move(t));
    }
    if (!is) throw std::runtime_error("checkpoint truncated: " + path);

    auto restore = [&blobs](nn::Adam& opt) {
        const auto& ps = opt.params();
        for (size_t i = 0; i < ps.size(); ++i) {
            for (const char* suffix : {"", "#m", "#v"}) {
                auto it = blobs.find(ps[i]->name + suffix);
                if (it == blobs.end())
                    throw std::runtime_error("checkpoint lacks tensor " + ps[i]->name + suffix);
                Tensor& dst = suffix[0] == '\0' ? ps[i]->w
                              : suffix[1] == 'm' ? opt.m()[i]
                                                 : opt.v()[i];
                if (!dst.same_shape(it->second))
                    throw std::runtime_error("checkpoint shape mismatch for " + it->first);
                dst = it->second;
            }
        }
    };
    restore(*opt_g_);
    restore(*opt_d_);
    restore(*opt_m_);
    opt_g_->set_steps(steps_g);
    opt_d_->set_steps(steps_d);
    opt_m_->set_steps(steps_m);
}

int load_checkpoint_params(const std::string& path, const std::vector<nn::Param*>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kCkptMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    if (take_u32(is) != 1u) throw std::runtime_error("unsupported checkpoint version");
    const int epoch = static_cast<int>(take_u32(is));
    take_u64(is);              // config hash
    for (int i = 0; i < 3; ++i) take_u64(is); // optimizer step counts
    take_str(is);              // rng state

    std::map<std::string, nn::Param*> takers;
    for (nn::Param* p : params) takers[p->name] = p;
    size_t filled = 0;
    const uint32_t count = take_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name;
        Tensor t = take_tensor(is, name);
        auto it = takers.find(name);
        if (it == takers.end()) continue;
        if (!it->second->w.same_shape(t))
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        it->second->w = std::move(t);
        ++filled;
    }
    if (!is) throw std::runtime_error("checkpoint truncated: " + path);
    if (filled != takers.size())
        throw std::runtime_error("checkpoint " + path + " lacks " +
                                 std::to_string(takers.size() - filled) +
                                 " of the requested tensors");
    return epoch;
}

// ---------------------------------------------------------------------------
// Full run

void Trainer::append_log_row(std::ostream& os, int64_t iteration, const char* routine,
                             const loss::LossBreakdown& l) const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(iteration), routine, l.cyc, l.adv_g, l.adv_d, l.sup,
                  l.total);
    os << buf;
}

void Trainer::run_experiment() {
    fs::create_directories(config_.out_dir);
    cfg::write_text_file(config_.out_dir + "/resolved_config.json",
                         cfg::serialize_config(config_));

    const std::string log_path = config_.out_dir + "/train_log.csv";
    std::ofstream log;
    if (epoch_ == 0) {
        log.open(log_path, std::ios::binary | std::ios::trunc);
        log << "# config_hash=" << cfg::config_hash_hex(config_) << "\n";
        log << "iteration,routine,cyc,adv_g,adv_d,sup,total\n";
    } else {
        log.open(log_path, std::ios::binary | std::ios::app);
    }
    if (!log) throw std::runtime_error("cannot open " + log_path);

    const int epochs = config_.train.epochs;
    const int boundary = full_training_epochs();
    const int ipe = iterations_per_epoch();
    const int stride = std::max(1, epochs / 40);
    std::vector<int> kept;
    if (epoch_ > 0 && config_.train.checkpoint_epochs.empty())
        for (int e = stride; e <= epoch_; e += stride)
            if (fs::exists(config_.out_dir + "/ckpt_" + std::to_string(e) + ".bin"))
                kept.push_back(e);

    int64_t it_global = static_cast<int64_t>(epoch_) * ipe;
    for (int e = epoch_; e < epochs; ++e) {
        const bool full_training = e < boundary;
        for (int i = 0; i < ipe; ++i) {
            ++it_global;
            const auto [ida, idb] = data::sample_pair(reg_.size(), loop_rng_);
            const data::Batch ba = draw_batch(ida);
            const data::Batch bb = draw_batch(idb);
            if (full_training) {
                append_log_row(log, it_global, "dis", step_dis_update(ba, bb));
                append_log_row(log, it_global, "gen", step_gen_update(ba, bb));
            }
            append_log_row(log, it_global, "model", step_model_update(ba, bb));
        }
        epoch_ = e + 1;

        const bool due = config_.train.checkpoint_epochs.empty()
                             ? epoch_ % stride == 0
                             : std::count(config_.train.checkpoint_epochs.begin(),
                                          config_.train.checkpoint_epochs.end(), epoch_) > 0;
        if (due) {
            save_checkpoint(config_.out_dir + "/ckpt_" + std::to_string(epoch_) + ".bin");
            if (config_.train.checkpoint_epochs.empty()) {
                kept.push_back(epoch_);
                while (kept.size() > 5) {
                    fs::remove(config_.out_dir + "/ckpt_" + std::to_string(kept.front()) +
                               ".bin");
                    kept.erase(kept.begin());
                }
            }
        }
        log.flush();
    }
}

// ---------------------------------------------------------------------------
// Source-only baseline

void train_baseline(net::BaselineUNet& model, const data::Registry& reg, int dataset_id,
                    const data::SplitSpec& split, const std::vector<int>& labeled_ids,
                    const cfg::TrainSettings& settings, uint64_t seed) {
    if (labeled_ids.empty()) throw std::runtime_error("baseline: no labeled training samples");
    Rng init_rng = Rng(seed).child(Rng::fnv1a("init/baseline"));
    model.init(init_rng);
    Rng rng = Rng(seed).child(Rng::fnv1a("baseline"));

    std::vector<nn::Param*> ps;
    model.collect_params(ps);
    nn::Adam opt(ps, static_cast<float>(settings.learning_rate), 0.5f, 0.999f,
                 static_cast<float>(settings.weight_decay));

    const int ipe =
        (static_cast<int>(labeled_ids.size()) + settings.batch_size - 1) / settings.batch_size;
    (void)split;
    for (int e = 0; e < settings.epochs; ++e)
        for (int i = 0; i < ipe; ++i) {
            data::Batch batch =
                data::make_batch(reg, dataset_id, labeled_ids, labeled_ids,
                                 settings.batch_size, rng);
            opt.zero_grad();
            nn::Ctx ctx;
            Tensor p = model.forward(batch.images, ctx);
            Tensor dp(p.shape());
            loss::cross_entropy_masked(batch.masks, p, batch.labeled, 1.0, &dp);
            model.backward(dp, ctx);
            opt.step();
        }
}

} // namespace isoseg::train
