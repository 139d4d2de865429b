#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "isoseg/config.hpp"
#include "isoseg/data.hpp"
#include "isoseg/losses.hpp"
#include "isoseg/networks.hpp"
#include "isoseg/nn.hpp"
#include "isoseg/rng.hpp"

namespace isoseg::train {

// The named subroutines. One event is emitted per subroutine invocation; a
// subroutine processes both translation directions of the iteration.
enum class Sub { Encode, Decode, Reencode, Redecode, Discriminate, Supervision };
const char* sub_name(Sub s);

struct TraceRecorder {
    bool enabled = false;
    std::vector<Sub> events;
    void emit(Sub s) {
        if (enabled) events.push_back(s);
    }
    void clear() { events.clear(); }
};

// Which of the four supervised term slots saw at least one labeled sample in
// the last model update: {direct a, direct b, translated a, translated b}.
struct SupActivity {
    bool direct_a = false, direct_b = false, translated_a = false, translated_b = false;
};

class Trainer {
public:
    Trainer(const cfg::ExperimentConfig& config, data::Registry& registry);

    // One routine step each; the batch pair is shared by the three routines
    // of an iteration. Breakdowns hold unweighted components; total applies
    // the configured weights (and never includes adv_d).
    loss::LossBreakdown step_dis_update(const data::Batch& a, const data::Batch& b);
    loss::LossBreakdown step_gen_update(const data::Batch& a, const data::Batch& b);
    loss::LossBreakdown step_model_update(const data::Batch& a, const data::Batch& b);

    // Full run: Full Training for the first ceil(fraction*epochs) epochs
    // (Dis, Gen, Model per iteration, in that order), Supervision Tuning for
    // the rest (Model only). Writes resolved_config.json, train_log.csv and
    // stride checkpoints under out_dir, continuing from the current epoch
    // when one was restored via load_checkpoint.
    void run_experiment();

    // Gradient-free mean cycle L1 over both directions of a probe pair. The
    // content-style variant decodes with a zero style so no rng is consumed.
    double probe_cycle(const data::Batch& a, const data::Batch& b);

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    // Introspection.
    net::Encoder& encoder() { return *enc_; }
    net::Decoder& decoder() { return *dec_; }
    net::Discriminator& discriminator() { return *dis_; }
    net::SegmenterM& segmenter() { return *seg_; }
    std::vector<nn::Param*> g_params();
    std::vector<nn::Param*> d_params();
    std::vector<nn::Param*> m_params();
    static uint64_t params_hash(const std::vector<nn::Param*>& ps);

    TraceRecorder& trace() { return trace_; }
    const SupActivity& last_sup_activity() const { return sup_activity_; }
    const data::SplitSpec& split(int dataset_id) const { return splits_.at(dataset_id); }
    const std::vector<int>& labeled_ids(int dataset_id) const { return labeled_.at(dataset_id); }
    int epoch() const { return epoch_; }
    int full_training_epochs() const; // phase switch boundary, ceil(fraction*epochs)
    int iterations_per_epoch() const;
    const cfg::ExperimentConfig& config() const { return config_; }
    Rng& loop_rng() { return loop_rng_; }
    data::Batch draw_batch(int dataset_id); // train batch through the loop rng
    int image_size() const { return image_size_; }

private:
    void build_models();
    bool in_supervision_tuning() const { return epoch_ >= full_training_epochs(); }
    void append_log_row(std::ostream& os, int64_t iteration, const char* routine,
                        const loss::LossBreakdown& l) const;

    cfg::ExperimentConfig config_;
    data::Registry& reg_;
    int image_size_ = 0;

    net::GeneratorSpec gspec_;
    std::unique_ptr<net::Encoder> enc_;
    std::unique_ptr<net::Decoder> dec_;
    std::unique_ptr<net::Discriminator> dis_;
    std::unique_ptr<net::SegmenterM> seg_;
    std::unique_ptr<nn::Adam> opt_g_, opt_d_, opt_m_;

    std::vector<data::SplitSpec> splits_;
    std::vector<std::vector<int>> labeled_;
    std::vector<cond::OneHotCode> codes_;

    Rng loop_rng_{0};
    int epoch_ = 0; // completed epochs
    TraceRecorder trace_;
    SupActivity sup_activity_;
};

// Stream seeds derived from the master seed; one per dataset so adding a
// dataset never reshuffles the others' splits or label draws.
uint64_t split_seed(uint64_t master_seed, const std::string& dataset_name);
uint64_t label_seed(uint64_t master_seed, const std::string& dataset_name);

// Parameter-only checkpoint read: fills every tensor in `params` by name and
// returns the stored epoch. Stored tensors without a taker (other networks,
// optimizer moments) are skipped, so a subset of the models can be restored.
int load_checkpoint_params(const std::string& path, const std::vector<nn::Param*>& params);

// Source-only reference: trains the plain U-Net with the masked pixel loss on
// one dataset's labeled train samples, mirroring the main loop's optimizer
// settings and epoch count.
void train_baseline(net::BaselineUNet& model, const data::Registry& reg, int dataset_id,
                    const data::SplitSpec& split, const std::vector<int>& labeled_ids,
                    const cfg::TrainSettings& settings, uint64_t seed);

} // namespace isoseg::train
