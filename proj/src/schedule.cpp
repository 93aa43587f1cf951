#include "plmlab/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace plmlab {

std::uint64_t WsdcSchedule::warmup_steps() const {
    return static_cast<std::uint64_t>(
        std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

void WsdcSchedule::validate() const {
    if (total_steps == 0) throw std::invalid_argument("WsdcSchedule: total_steps must be positive");
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
        throw std::invalid_argument("WsdcSchedule: warmup_fraction in (0,1) required");
    if (!(peak_lr > decay_end_lr))
        throw std::invalid_argument("WsdcSchedule: peak_lr must exceed decay_end_lr");
    if (decay_end_lr < constant_lr)
        throw std::invalid_argument("WsdcSchedule: decay_end_lr below the constant floor");
    const std::uint64_t w = warmup_steps();
    if (!(w <= stable_end_step && stable_end_step < decay_end_step && decay_end_step <= total_steps))
        throw std::invalid_argument("WsdcSchedule: phase boundaries out of order");
    if (final_cosine && (final_cosine->start_step < decay_end_step || final_cosine->start_step >= total_steps))
        throw std::invalid_argument("WsdcSchedule: final cosine segment out of range");
}

double wsdc_lr(std::uint64_t step, const WsdcSchedule& s) {
    s.validate();
    if (step > s.total_steps) throw std::invalid_argument("wsdc_lr: step out of range");

    const std::uint64_t warmup = s.warmup_steps();
    if (step <= warmup) {
        if (warmup == 0) return s.peak_lr;
        return std::lerp(0.0, s.peak_lr, static_cast<double>(step) / static_cast<double>(warmup));
    }
    if (step <= s.stable_end_step) return s.peak_lr;
    if (step <= s.decay_end_step) {
        const double t = static_cast<double>(step - s.stable_end_step) /
                         static_cast<double>(s.decay_end_step - s.stable_end_step);
        return std::lerp(s.peak_lr, s.decay_end_lr, t);
    }
    if (s.final_cosine && step >= s.final_cosine->start_step) {
        return cosine_lr(step - s.final_cosine->start_step, s.constant_lr, s.final_cosine->end_lr,
                         s.total_steps - s.final_cosine->start_step);
    }
    return s.constant_lr;
}

double cosine_lr(std::uint64_t step, double peak, double min_lr, std::uint64_t total) {
    if (total == 0) throw std::invalid_argument("cosine_lr: total must be positive");
    if (step > total) throw std::invalid_argument("cosine_lr: step out of range");
    if (step == 0) return peak;
    if (step == total) return min_lr;
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return min_lr + (peak - min_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

} // namespace plmlab
