#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "icl/core.hpp"
#include "icl/predictor.hpp"
#include "icl/tasks.hpp"

namespace icl::eval {

struct BootstrapConfig {
    int n_boot = 1000;
    double ci_level = 0.90;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Default evaluation batch size.
inline constexpr std::size_t kDefaultPromptCount = 1280;

struct EvalCurve {
    std::string name;
    std::vector<Eigen::Index> k;
    std::vector<double> mean_loss;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    std::size_t B = 0;
    int n_boot = 0;
    double ci_level = 0.0;

    std::size_t size() const { return k.size(); }
    /// mean_loss at prefix length kk; throws if kk is not on the grid.
    double at(Eigen::Index kk) const;
};

/// Prompt sets of two dumps or of a dump and its gold file do not line up.
struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when some predictions failed; `partial` covers the prompts that
/// succeeded at every k (empty curve if none did).
struct PartialResultError : std::runtime_error {
    PartialResultError(const std::string& what, std::vector<bridge::Failure> failures, EvalCurve partial)
        : std::runtime_error(what), failures(std::move(failures)), partial(std::move(partial)) {}
    std::vector<bridge::Failure> failures;
    EvalCurve partial;
};

/// Noiseless next targets f(x_{k+1}) for each k in k_range, one row per prompt.
Mat next_targets(const std::vector<Prompt>& prompts, const std::vector<Eigen::Index>& k_range);

/// Mean per column of `losses` (prompts x k) plus a percentile bootstrap band
/// that resamples whole prompts (rows). The band is widened to contain the mean.
EvalCurve curve_from_losses(std::string name, const std::vector<Eigen::Index>& k_range, const Mat& losses,
                            const BootstrapConfig& boot);

/// Squared errors of next-target records against the prompts' noiseless targets.
Mat losses_from_records(const std::vector<bridge::PredictionRecord>& records, const std::vector<Prompt>& prompts,
                        const std::vector<Eigen::Index>& k_range);

EvalCurve curve_from_records(std::string name, const std::vector<bridge::PredictionRecord>& records,
                             const std::vector<Prompt>& prompts, const std::vector<Eigen::Index>& k_range,
                             const BootstrapConfig& boot);

/// loss@k of `predictor` on prompts truncated to each k. Requires every prompt
/// to have at least max(k_range) + 1 pairs.
EvalCurve loss_at_k(const bridge::PredictorHandle& predictor, const std::vector<Prompt>& prompts,
                    const std::vector<Eigen::Index>& k_range, const BootstrapConfig& boot = {}, int workers = 1);

struct Comparison {
    std::vector<EvalCurve> curves;                               // successful predictors, input order
    std::map<std::string, std::vector<bridge::Failure>> failures;  // by predictor name
};

/// One curve per predictor on a shared prompt set; a failing predictor is
/// reported without aborting the others.
Comparison compare_predictors(const std::vector<bridge::PredictorHandle>& predictors,
                              const std::vector<Prompt>& prompts, const std::vector<Eigen::Index>& k_range,
                              const BootstrapConfig& boot = {}, int workers = 1);

/// OLS on the feature map of each prompt's own generating family, looked up by
/// prompt id (needs keyed queries, as issued by run_batch).
bridge::PredictorHandle gold_feature_ols(const std::vector<Prompt>& prompts);

// ---------------------------------------------------------------------------

enum class SuiteKind { Monomials, FourierSubset, NlrDiscrete };

SuiteKind suite_kind_from_string(const std::string& s);
std::string to_string(SuiteKind k);

struct SuiteParams {
    int d = 10;             // monomial / NLR input dimension (NLR default set by defaults_for)
    int D = 10;             // feature-set size
    int N = 20;             // Fourier max frequency
    double L = 5.0;         // Fourier half-width
    double noise_var = 0.25;  // NLR observation noise
    Eigen::Index p = 124;   // pairs per prompt
    std::size_t n_prompts = kDefaultPromptCount;
    std::size_t n_ood_families = 100;
    bool normalize = false;

    /// Experiment defaults per kind: monomials d = D = 10, p = 124; Fourier
    /// N = 20, D = 3, L = 5, p = 82; NLR d = 8, sigma^2 = 0.25, p = 16.
    static SuiteParams defaults_for(SuiteKind kind);
};

struct MultiTaskSuite {
    SuiteKind kind;
    std::size_t K = 0;
    int D = 0;
    /// Size of the pool the pretraining families are drawn from (saturating).
    double pool_size = 0;
    std::vector<FunctionFamilySpec> pretrain_families;
    std::vector<FunctionFamilySpec> ood_families;
    PromptSet id_prompts;
    PromptSet ood_prompts;
};

/// K distinct pretraining families without replacement, ID prompts drawn from
/// their uniform mixture and OOD prompts from families outside it (Gaussian
/// weights for NLR). Throws ConfigError if K exceeds the pool.
MultiTaskSuite build_multitask_suite(SuiteKind kind, const SuiteParams& params, std::size_t K, std::uint64_t seed);

/// Family identifier: "monomials:(i,j)(k,l)...", "fourier:{a,b,c}", else the spec id or kind.
std::string family_key(const FunctionFamilySpec& spec);

// ---------------------------------------------------------------------------

struct Checkpoint {
    std::int64_t step = 0;
    std::vector<bridge::PredictionRecord> id_predictions;
    std::vector<bridge::PredictionRecord> ood_predictions;
};

struct ForgettingReport {
    std::vector<std::int64_t> steps;
    std::vector<double> id_loss;
    std::vector<double> ood_loss;
    std::vector<double> id_avg;   // trailing moving averages
    std::vector<double> ood_avg;
    std::size_t window = 0;
    std::int64_t t_min = 0;       // step of the smallest averaged OOD loss
    double ratio = 1.0;           // final / minimum averaged OOD loss
};

/// Trailing moving average over `window` entries (shorter at the start).
std::vector<double> moving_average(const std::vector<double>& series, std::size_t window);

ForgettingReport forgetting_from_losses(std::vector<std::int64_t> steps, std::vector<double> id_loss,
                                        std::vector<double> ood_loss, std::size_t window = 10);

/// Per-checkpoint mean next-target loss on each gold set. Every checkpoint
/// must cover the same (prompt, k, query) keys, all present in the gold set.
ForgettingReport checkpoint_sweep(const std::vector<Checkpoint>& checkpoints, const std::vector<Prompt>& id_gold,
                                  const std::vector<Prompt>& ood_gold, std::size_t window = 10);

/// Reads `<step>.id.jsonl` and `<step>.ood.jsonl` pairs from a directory, ordered by step.
std::vector<Checkpoint> load_checkpoint_dumps(const std::string& dir);

void write_forgetting_csv(std::ostream& out, const ForgettingReport& report);

// ---------------------------------------------------------------------------

/// Columns predictor,k,mean,ci_low,ci_high with 17 significant digits.
void write_curves_csv(std::ostream& out, const std::vector<EvalCurve>& curves);
void write_curves_csv(const std::string& path, const std::vector<EvalCurve>& curves);
std::vector<EvalCurve> read_curves_csv(std::istream& in);

struct SvgOptions {
    bool log_y = false;
    int width = 640;
    int height = 400;
    std::string title;
};

void write_curves_svg(std::ostream& out, const std::vector<EvalCurve>& curves, const SvgOptions& opts = {});
void write_curves_svg(const std::string& path, const std::vector<EvalCurve>& curves, const SvgOptions& opts = {});

}  // namespace icl::eval
