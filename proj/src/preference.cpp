#include "plmlab/preference.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace plmlab {

namespace {

void check_logprob(double v) {
    if (!std::isfinite(v) || v > 0.0)
        throw std::invalid_argument("PreferenceBatch: log-probabilities must be finite and <= 0");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically stable -log sigmoid(x) = log(1 + exp(-x)).
double neg_log_sigmoid(double x) {
    if (x >= 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

} // namespace

void PreferenceBatch::validate() const {
    if (examples.empty()) throw std::invalid_argument("PreferenceBatch: empty batch");
    for (const auto& e : examples) {
        check_logprob(e.policy_chosen);
        check_logprob(e.policy_rejected);
        check_logprob(e.ref_chosen);
        check_logprob(e.ref_rejected);
        for (const RefinementLogProbs* r : {&e.given_rejected, &e.given_chosen}) {
            check_logprob(r->policy_chosen);
            check_logprob(r->policy_rejected);
            check_logprob(r->ref_chosen);
            check_logprob(r->ref_rejected);
        }
    }
}

LossResult dpo_loss(const PreferenceBatch& batch, double beta) {
    if (batch.examples.empty()) throw std::invalid_argument("dpo_loss: empty batch");
    const double n = static_cast<double>(batch.size());
    LossResult res;
    res.grad.assign(batch.size() * kPolicyCoordsPerExample, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& e = batch.examples[i];
        const double margin =
            (e.policy_chosen - e.ref_chosen) - (e.policy_rejected - e.ref_rejected);
        res.loss += neg_log_sigmoid(beta * margin) / n;
        const double d_margin = -beta * (1.0 - sigmoid(beta * margin)) / n;
        res.grad[i * kPolicyCoordsPerExample + 0] = d_margin;
        res.grad[i * kPolicyCoordsPerExample + 1] = -d_margin;
    }
    return res;
}

LossResult refine_loss(const PreferenceBatch& batch, double beta) {
    if (batch.examples.empty()) throw std::invalid_argument("refine_loss: empty batch");
    const double n = static_cast<double>(batch.size());
    LossResult res;
    res.grad.assign(batch.size() * kPolicyCoordsPerExample, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& e = batch.examples[i];
        const RefinementLogProbs* contexts[2] = {&e.given_rejected, &e.given_chosen};
        for (int c = 0; c < 2; ++c) {
            const auto& r = *contexts[c];
            const double delta_w = r.policy_chosen - r.ref_chosen;
            const double delta_l = r.policy_rejected - r.ref_rejected;
            const double bracket = 0.5 - beta * (delta_w - delta_l);
            res.loss += bracket * bracket / n;
            const double d_chosen = 2.0 * bracket * (-beta) / n;
            res.grad[i * kPolicyCoordsPerExample + 2 + 2 * c] = d_chosen;
            res.grad[i * kPolicyCoordsPerExample + 3 + 2 * c] = -d_chosen;
        }
    }
    return res;
}

LossResult aries_loss(const PreferenceBatch& batch, const LossParams& params) {
    if (params.alpha < 0.0 || params.alpha > 1.0)
        throw std::invalid_argument("aries_loss: alpha in [0,1] required");
    const LossResult dpo = dpo_loss(batch, params.beta_dpo);
    const LossResult refine = refine_loss(batch, params.beta_refine);
    LossResult res;
    res.loss = (1.0 - params.alpha) * dpo.loss + params.alpha * refine.loss;
    res.grad.resize(dpo.grad.size());
    for (std::size_t i = 0; i < res.grad.size(); ++i)
        res.grad[i] = (1.0 - params.alpha) * dpo.grad[i] + params.alpha * refine.grad[i];
    return res;
}

double implicit_reward_accuracy(const PreferenceBatch& batch, double beta) {
    if (batch.examples.empty()) throw std::invalid_argument("implicit_reward_accuracy: empty batch");
    double score = 0.0;
    for (const auto& e : batch.examples) {
        const double r_chosen = beta * (e.policy_chosen - e.ref_chosen);
        const double r_rejected = beta * (e.policy_rejected - e.ref_rejected);
        if (r_chosen > r_rejected)
            score += 1.0;
        else if (r_chosen == r_rejected)
            score += 0.5;
    }
    return score / static_cast<double>(batch.size());
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> analytic_grad, std::span<const double> point, double eps) {
    if (analytic_grad.size() != point.size())
        throw std::invalid_argument("grad_check: gradient/point size mismatch");
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + eps;
        const double fp = f(x);
        x[i] = saved - eps;
        const double fm = f(x);
        x[i] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({1e-10, std::fabs(numeric), std::fabs(analytic_grad[i])});
        worst = std::max(worst, std::fabs(numeric - analytic_grad[i]) / denom);
    }
    return worst;
}

std::vector<double> policy_coords(const PreferenceBatch& batch) {
    std::vector<double> coords;
    coords.reserve(batch.size() * kPolicyCoordsPerExample);
    for (const auto& e : batch.examples) {
        coords.push_back(e.policy_chosen);
        coords.push_back(e.policy_rejected);
        coords.push_back(e.given_rejected.policy_chosen);
        coords.push_back(e.given_rejected.policy_rejected);
        coords.push_back(e.given_chosen.policy_chosen);
        coords.push_back(e.given_chosen.policy_rejected);
    }
    return coords;
}

PreferenceBatch with_policy_coords(const PreferenceBatch& batch, std::span<const double> coords) {
    if (coords.size() != batch.size() * kPolicyCoordsPerExample)
        throw std::invalid_argument("with_policy_coords: size mismatch");
    PreferenceBatch out = batch;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& e = out.examples[i];
        const double* c = coords.data() + i * kPolicyCoordsPerExample;
        e.policy_chosen = c[0];
        e.policy_rejected = c[1];
        e.given_rejected.policy_chosen = c[2];
        e.given_rejected.policy_rejected = c[3];
        e.given_chosen.policy_chosen = c[4];
        e.given_chosen.policy_rejected = c[5];
    }
    return out;
}

namespace {

using nlohmann::json;

RefinementLogProbs refinement_from_json(const json& j, const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (key != "policy_chosen" && key != "policy_rejected" && key != "ref_chosen" &&
            key != "ref_rejected")
            throw std::invalid_argument("preference batch: unknown field '" + key + "' in " + where);
    RefinementLogProbs r;
    r.policy_chosen = j.at("policy_chosen").get<double>();
    r.policy_rejected = j.at("policy_rejected").get<double>();
    r.ref_chosen = j.at("ref_chosen").get<double>();
    r.ref_rejected = j.at("ref_rejected").get<double>();
    return r;
}

} // namespace

PreferenceBatch preference_batch_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("preference batch: invalid JSON: ") + e.what());
    }
    if (!j.is_array()) throw std::invalid_argument("preference batch: top-level array required");

    PreferenceBatch batch;
    for (const auto& ex : j) {
        for (const auto& [key, _] : ex.items())
            if (key != "policy_chosen" && key != "policy_rejected" && key != "ref_chosen" &&
                key != "ref_rejected" && key != "given_rejected" && key != "given_chosen")
                throw std::invalid_argument("preference batch: unknown field '" + key + "'");
        try {
            PreferenceExample e;
            e.policy_chosen = ex.at("policy_chosen").get<double>();
            e.policy_rejected = ex.at("policy_rejected").get<double>();
            e.ref_chosen = ex.at("ref_chosen").get<double>();
            e.ref_rejected = ex.at("ref_rejected").get<double>();
            e.given_rejected = refinement_from_json(ex.at("given_rejected"), "given_rejected");
            e.given_chosen = refinement_from_json(ex.at("given_chosen"), "given_chosen");
            batch.examples.push_back(e);
        } catch (const json::exception& err) {
            throw std::invalid_argument(std::string("preference batch: ") + err.what());
        }
    }
    batch.validate();
    return batch;
}

} // namespace plmlab
