#pragma once

#include <cstdint>
#include <optional>

namespace plmlab {

// Warmup-Stable-Decay-Constant learning-rate schedule: linear warmup from 0
// to peak over warmup_fraction of total_steps, flat peak through
// stable_end_step, linear decay to decay_end_lr at decay_end_step, then a
// constant floor, with an optional trailing cosine segment.
struct WsdcSchedule {
    std::uint64_t total_steps = 0;
    double warmup_fraction = 0.01;
    double peak_lr = 3e-4;
    double decay_end_lr = 3e-5;
    std::uint64_t stable_end_step = 0;
    std::uint64_t decay_end_step = 0;
    double constant_lr = 3e-5;

    struct FinalCosine {
        std::uint64_t start_step = 0;
        double end_lr = 0.0;
    };
    std::optional<FinalCosine> final_cosine;

    std::uint64_t warmup_steps() const;
    void validate() const;
};

double wsdc_lr(std::uint64_t step, const WsdcSchedule& schedule);

// Half-cosine from peak at step 0 to min_lr at step total.
double cosine_lr(std::uint64_t step, double peak, double min_lr, std::uint64_t total);

} // namespace plmlab
