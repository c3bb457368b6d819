#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "debias/design.hpp"
#include "debias/estimators.hpp"
#include "debias/variance.hpp"

namespace debias {

// All n-choose-n_treated treated-index sets of a completely randomized
// experiment.  The count is tracked exactly in 128-bit arithmetic; spaces
// too large even for that are still usable for sampling, but total() and
// unrank() refuse.
class AssignmentSpace {
  public:
    AssignmentSpace(int n, int n_treated);

    int n() const { return n_; }
    int n_treated() const { return n_treated_; }

    bool total_exact() const { return exact_; }
    // Throws Overflow when the exact count exceeds 64 bits.
    std::uint64_t total() const;
    double total_approx() const { return approx_; }

  private:
    int n_;
    int n_treated_;
    bool exact_;
    unsigned __int128 total_;
    double approx_;
};

// Visits every assignment in lexicographic order of the treated index set.
void enumerate(const AssignmentSpace& space,
               const std::function<void(const Assignment&)>& visit);

// Assignment at a given lexicographic rank, 0 <= index < total().
Assignment unrank(const AssignmentSpace& space, std::uint64_t index);

// count independent uniform draws (with replacement across draws) from the
// space, reproducible from the seed.
std::vector<Assignment> sample(const AssignmentSpace& space,
                               std::uint64_t seed, std::uint64_t count);

// Randomization-distribution summaries ---------------------------------

// The five estimators the engine tracks, in reporting order.
inline constexpr int kNumEstimators = 5;
const std::vector<std::string>& estimator_names();

struct EstimatorSummary {
    std::string name;
    double mean = 0;
    double bias = 0;
    double sd = 0;
    double rmse = 0;
    // Monte Carlo standard errors; NaN under exact enumeration.
    double se_bias = 0;
    double se_sd = 0;
    double se_rmse = 0;
};

struct CiSummary {
    std::string estimator;
    std::string flavor;
    std::string mode;
    double coverage = 0;
    double mean_width = 0;
    double median_width = 0;  // lower median; NaN when widths not collected
    double se_coverage = 0;   // NaN under exact enumeration
    double se_mean_width = 0;
    double se_median_width = 0;
};

struct DistributionSummary {
    std::string mode;  // "exact" or "monte-carlo"
    int n = 0;
    int n_treated = 0;
    std::uint64_t draws = 0;
    std::uint64_t seed = 0;  // monte-carlo only
    double true_ate = 0;
    double level = 0.95;
    std::string t_df;  // "n-1" or "residual"
    std::uint64_t skipped_singular = 0;
    double max_abs_correction_ni = 0;
    double max_abs_correction_i = 0;
    double mean_abs_correction_ni = 0;
    double mean_abs_correction_i = 0;
    std::vector<EstimatorSummary> estimators;
    std::vector<CiSummary> ci;
};

struct EngineOptions {
    std::vector<HcFlavor> flavors{HcFlavor::hc2, HcFlavor::bc_hc2};
    std::vector<CiMode> ci_modes{CiMode::normal, CiMode::student_t,
                                 CiMode::satterthwaite};
    // Plain Student-t intervals default to df = n - 1 (each observation its
    // own cluster); TDfConvention::residual switches to n - rank(X).
    TDfConvention t_df = TDfConvention::nminus1;
    double level = 0.95;
    int threads = 0;  // 0 = one worker per hardware thread
    std::uint64_t budget = 10'000'000;
    bool skip_singular = false;
    // Median widths need the per-draw interval widths kept in memory.
    bool collect_widths = true;
    // When nonempty, every evaluated assignment is appended as a CSV row.
    std::string dump_csv_path;
};

// Evaluates all five estimators and the requested intervals over every
// assignment in the space.  Bitwise identical results for any thread count.
// Throws BudgetExceeded when total() > options.budget; on a singular
// assignment either throws SingularMatrix naming the rank or, with
// skip_singular, drops it and counts it in skipped_singular.
DistributionSummary exact_distribution(const PotentialOutcomeTable& table,
                                       const AssignmentSpace& space,
                                       const EngineOptions& options = {});

// Same summaries over seeded uniform draws, with Monte Carlo standard
// errors attached.  Reproducible from (seed, reps) for any thread count.
DistributionSummary monte_carlo_distribution(
    const PotentialOutcomeTable& table, const AssignmentSpace& space,
    std::uint64_t seed, std::uint64_t reps, const EngineOptions& options = {});

std::string summary_json(const DistributionSummary& summary);
std::string summary_csv(const DistributionSummary& summary);

}  // namespace debias
