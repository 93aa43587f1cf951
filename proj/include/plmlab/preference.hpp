#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace plmlab {

// Log-probabilities of both models over both responses under one
// refinement context (the prompt plus a previous response and the
// refinement template).
struct RefinementLogProbs {
    double policy_chosen = 0.0;
    double policy_rejected = 0.0;
    double ref_chosen = 0.0;
    double ref_rejected = 0.0;
};

// One preference example: direct-context log-probs plus the refinement
// analogues conditioned on the rejected and on the chosen response.
struct PreferenceExample {
    double policy_chosen = 0.0;
    double policy_rejected = 0.0;
    double ref_chosen = 0.0;
    double ref_rejected = 0.0;
    RefinementLogProbs given_rejected;
    RefinementLogProbs given_chosen;
};

struct PreferenceBatch {
    std::vector<PreferenceExample> examples;

    // All log-probabilities must be finite and <= 0.
    void validate() const;
    std::size_t size() const { return examples.size(); }
};

struct LossParams {
    double alpha = 0.8;
    double beta_dpo = 0.1;
    double beta_refine = 0.01;
};

// Gradient w.r.t. the policy log-probs, six per example in the order:
// direct chosen/rejected, given-rejected chosen/rejected, given-chosen
// chosen/rejected.
inline constexpr std::size_t kPolicyCoordsPerExample = 6;

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad; // size() == 6 * batch size
};

// Mean over examples of -log sigmoid(beta * [(policy - ref) margin]).
LossResult dpo_loss(const PreferenceBatch& batch, double beta);

// Sum of the two refinement-context mean squared deviations
// [1/2 - beta * (delta_chosen - delta_rejected)]^2.
LossResult refine_loss(const PreferenceBatch& batch, double beta);

// (1 - alpha) * dpo + alpha * refine, with the per-component betas.
LossResult aries_loss(const PreferenceBatch& batch, const LossParams& params);

// Fraction of examples whose chosen implicit reward beta*log(policy/ref)
// exceeds the rejected one; exact ties count 0.5.
double implicit_reward_accuracy(const PreferenceBatch& batch, double beta);

// Max over coordinates of the relative error between `analytic_grad` and
// central finite differences of `f` at `point`.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> analytic_grad, std::span<const double> point,
                  double eps = 1e-5);

// Flattened policy coordinates for gradient checking (6 per example).
std::vector<double> policy_coords(const PreferenceBatch& batch);
PreferenceBatch with_policy_coords(const PreferenceBatch& batch, std::span<const double> coords);

// JSON array of examples with exactly the field names of
// PreferenceExample / RefinementLogProbs.
PreferenceBatch preference_batch_from_json(const std::string& json_text);

} // namespace plmlab
