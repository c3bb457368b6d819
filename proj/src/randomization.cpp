#include "debias/randomization.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "debias/errors.hpp"
#include "debias/numeric.hpp"

namespace debias {

namespace {

using u128 = unsigned __int128;
constexpr u128 kU128Max = ~u128(0);
constexpr std::uint64_t kChunk = 16384;

// Saturating Pascal triangle.  Entries that stay below the saturation point
// are exact; reads used by unranking are completion counts and therefore
// bounded by the (representable) total, so they are never polluted.
struct PascalTable {
    int n;
    int k;
    std::vector<u128> data;  // (n + 1) x (k + 1), row-major
    bool saturated = false;

    PascalTable(int n_, int k_) : n(n_), k(k_), data((n_ + 1) * (k_ + 1), 0) {
        at(0, 0) = 1;
        for (int i = 1; i <= n; ++i) {
            at(i, 0) = 1;
            for (int j = 1; j <= std::min(i, k); ++j) {
                const u128 a = at(i - 1, j);
                const u128 b = at(i - 1, j - 1);
                if (a > kU128Max - b) {
                    at(i, j) = kU128Max;
                    saturated = true;
                } else {
                    at(i, j) = a + b;
                }
            }
        }
    }

    u128& at(int i, int j) { return data[i * (k + 1) + j]; }
    u128 get(int i, int j) const {
        if (j < 0 || j > k || j > i) return 0;
        return data[i * (k + 1) + j];
    }
};

double binomial_approx(int n, int k) {
    return std::exp(numeric::log_gamma(n + 1.0) - numeric::log_gamma(k + 1.0) -
                    numeric::log_gamma(n - k + 1.0));
}

// C(n, k) with O(k) memory; sets *saturated when the value (or any partial
// count, which Pascal growth bounds by the result) leaves 128-bit range.
u128 binomial_u128(int n, int k, bool* saturated) {
    k = std::min(k, n - k);
    std::vector<u128> row(k + 1, 0);
    row[0] = 1;
    bool sat = false;
    for (int i = 1; i <= n; ++i) {
        for (int j = std::min(i, k); j >= 1; --j) {
            if (row[j] > kU128Max - row[j - 1]) {
                row[j] = kU128Max;
                sat = true;
            } else {
                row[j] += row[j - 1];
            }
        }
    }
    if (saturated) *saturated = sat;
    return row[k];
}

// Lexicographic successor of a k-combination of {0..n-1}; false at the end.
bool next_combination(std::vector<int>& c, int n) {
    const int k = static_cast<int>(c.size());
    int i = k - 1;
    while (i >= 0 && c[i] == n - k + i) --i;
    if (i < 0) return false;
    ++c[i];
    for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
    return true;
}

void unrank_into(const PascalTable& table, int n, int k, std::uint64_t index,
                 std::vector<int>& out) {
    out.resize(k);
    u128 rest = index;
    int v = 0;
    for (int j = 0; j < k; ++j) {
        while (true) {
            const u128 with_v = table.get(n - 1 - v, k - 1 - j);
            if (rest < with_v) break;
            rest -= with_v;
            ++v;
        }
        out[j] = v++;
    }
}

std::uint64_t bounded_uint(std::mt19937_64& rng, std::uint64_t range) {
    // Rejection keeps the draw exactly uniform and the stream portable.
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t lim = max - max % range;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= lim);
    return x % range;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void draw_combination(std::mt19937_64& rng, std::vector<int>& pool, int k,
                      std::vector<int>& out) {
    const int n = static_cast<int>(pool.size());
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int j = 0; j < k; ++j) {
        const auto r = static_cast<int>(
            bounded_uint(rng, static_cast<std::uint64_t>(n - j)));
        std::swap(pool[j], pool[j + r]);
    }
    out.assign(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
}

}  // namespace

AssignmentSpace::AssignmentSpace(int n, int n_treated)
    : n_(n), n_treated_(n_treated) {
    if (n < 4) throw DomainError("assignment space needs n >= 4");
    if (n_treated < 2 || n_treated > n - 2)
        throw DegenerateArm("assignment space needs 2 <= n_treated <= n - 2");
    bool saturated = false;
    total_ = binomial_u128(n, n_treated, &saturated);
    exact_ = !saturated;
    approx_ = binomial_approx(n, n_treated);
}

std::uint64_t AssignmentSpace::total() const {
    char approx[32];
    std::snprintf(approx, sizeof approx, "%.6g", approx_);
    if (!exact_)
        throw Overflow(std::string("assignment count exceeds 128-bit range "
                                   "(about ") +
                       approx + ")");
    if (total_ > u128(std::numeric_limits<std::uint64_t>::max()))
        throw Overflow(std::string("assignment count exceeds 64-bit range "
                                   "(about ") +
                       approx + ")");
    return static_cast<std::uint64_t>(total_);
}

void enumerate(const AssignmentSpace& space,
               const std::function<void(const Assignment&)>& visit) {
    const int n = space.n(), k = space.n_treated();
    std::vector<int> c(k);
    for (int i = 0; i < k; ++i) c[i] = i;
    do {
        visit(Assignment{c, n});
    } while (next_combination(c, n));
}

Assignment unrank(const AssignmentSpace& space, std::uint64_t index) {
    const std::uint64_t total = space.total();
    if (index >= total)
        throw IndexOutOfRange("rank " + std::to_string(index) +
                              " outside [0, " + std::to_string(total) + ")");
    const int n = space.n(), k = space.n_treated();
    PascalTable table(n, k);
    std::vector<int> c;
    unrank_into(table, n, k, index, c);
    return Assignment{std::move(c), n};
}

std::vector<Assignment> sample(const AssignmentSpace& space,
                               std::uint64_t seed, std::uint64_t count) {
    const int n = space.n(), k = space.n_treated();
    std::mt19937_64 rng(seed);
    std::vector<int> pool(n);
    std::vector<Assignment> out;
    out.reserve(count);
    std::vector<int> c;
    for (std::uint64_t d = 0; d < count; ++d) {
        draw_combination(rng, pool, k, c);
        out.push_back(Assignment{c, n});
    }
    return out;
}

const std::vector<std::string>& estimator_names() {
    static const std::vector<std::string> names = {
        "unadjusted", "ols_noninteracted", "ols_interacted",
        "debiased_noninteracted", "debiased_interacted"};
    return names;
}

// ------------------------------------------------------------------
// Randomization-distribution engine.
//
// The estimators are recomputed from one pass over the treated indices:
// arm-A sums are accumulated directly and arm-B sums derived from
// precomputed full-sample totals.  A property test pins these fast-path
// values to the public per-dataset API.
// ------------------------------------------------------------------

namespace {

constexpr int kFitU = 0, kFitNi = 1, kFitI = 2;
constexpr int kWfHc2 = 0, kWfHc3 = 1;
constexpr double kLeverageEps = 1e-12;

int fit_of_estimator(int est) {
    switch (est) {
        case 0: return kFitU;
        case 1: case 3: return kFitNi;
        default: return kFitI;
    }
}

struct CellSpec {
    int est;
    HcFlavor flavor;
    CiMode mode;
    int fit;
    int wf;
    bool bc;
};

struct EngineContext {
    const PotentialOutcomeTable* table = nullptr;
    EngineOptions opt;
    int n = 0, k = 0, n_a = 0, n_b = 0;
    double p_a = 0, p_b = 0;
    double true_ate = 0;
    Matrix zc;     // centered covariates
    Matrix d_inv;  // inverse of mean(z z')
    Vec h;         // population leverages
    BiasConstants consts{};
    // full-sample totals
    double sum_a = 0, sum_b = 0, sum_ha = 0, sum_hb = 0, sum_h = 0;
    Vec sum_az, sum_bz;
    Matrix sum_zz;
    // inference plan
    std::vector<CellSpec> cells;
    bool need_fit[3] = {false, false, false};
    bool need_wf[2] = {false, false};
    bool need_bc = false;
    bool want_satt = false;
    double crit_z = 0;
    double crit_t[3] = {0, 0, 0};
    double level_p = 0.975;
    int p_of_fit[3] = {2, 0, 0};
};

struct Eval {
    double est[5];
    double bias_ni, bias_i;
    double se[3][2];
    double crit_satt[3][2];
    double se_bc[2][2];  // [0]=noninteracted fit, [1]=interacted fit
};

// Per-thread scratch; everything sized once.
struct FitScratch {
    Matrix x, xtx, xtx_inv, gmat, eye;
    Vec xty, beta;
};

struct Workspace {
    Vec sA_z, sA_az, sA_bz, zbar_a, zbar_b, nhat_a, nhat_b, nhat;
    Vec q_hat, q_hat_a, q_hat_b, tmp_k, dinv_nhat;
    Matrix sA_zz, dhat_a, dhat_b, dhat;
    Eigen::LDLT<Matrix> ldlt_k;
    Vec y, resid, hat, u, a2;
    FitScratch fit[3];
    Eigen::LDLT<Matrix> ldlt_p[3];

    explicit Workspace(const EngineContext& ctx)
        : sA_z(ctx.k), sA_az(ctx.k), sA_bz(ctx.k), zbar_a(ctx.k),
          zbar_b(ctx.k), nhat_a(ctx.k), nhat_b(ctx.k), nhat(ctx.k),
          q_hat(ctx.k), q_hat_a(ctx.k), q_hat_b(ctx.k), tmp_k(ctx.k),
          dinv_nhat(ctx.k), sA_zz(ctx.k, ctx.k), dhat_a(ctx.k, ctx.k),
          dhat_b(ctx.k, ctx.k), dhat(ctx.k, ctx.k), ldlt_k(ctx.k), y(ctx.n),
          resid(ctx.n), hat(ctx.n), u(ctx.n), a2(ctx.n) {
        const int n = ctx.n, k = ctx.k;
        for (int f = 0; f < 3; ++f) {
            const int p = ctx.p_of_fit[f];
            FitScratch& fs = fit[f];
            fs.x = Matrix::Zero(n, p);
            fs.x.col(0).setOnes();
            fs.xtx.resize(p, p);
            fs.xtx_inv.resize(p, p);
            fs.gmat.resize(n, p);
            fs.eye = Matrix::Identity(p, p);
            fs.xty.resize(p);
            fs.beta.resize(p);
            ldlt_p[f] = Eigen::LDLT<Matrix>(p);
        }
        fit[kFitNi].x.rightCols(k) = ctx.zc;
        fit[kFitI].x.middleCols(2, k) = ctx.zc;
    }
};

void kahan_add(double& sum, double& comp, double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
        comp += (sum - t) + v;
    else
        comp += (v - t) + sum;
    sum = t;
}

struct Accum {
    double s1[5] = {}, c1[5] = {};
    double s2[5] = {}, c2[5] = {};
    double s4[5] = {}, c4[5] = {};
    std::vector<double> cover;
    std::vector<double> wsum, wcomp, w2sum, w2comp;
    double max_corr_ni = 0, max_corr_i = 0;
    double abs_corr[2] = {}, abs_corr_c[2] = {};
    std::uint64_t evaluated = 0, skipped = 0;

    explicit Accum(std::size_t n_cells)
        : cover(n_cells, 0), wsum(n_cells, 0), wcomp(n_cells, 0),
          w2sum(n_cells, 0), w2comp(n_cells, 0) {}

    void merge(const Accum& o) {
        for (int e = 0; e < 5; ++e) {
            kahan_add(s1[e], c1[e], o.s1[e]);
            kahan_add(s1[e], c1[e], o.c1[e]);
            kahan_add(s2[e], c2[e], o.s2[e]);
            kahan_add(s2[e], c2[e], o.c2[e]);
            kahan_add(s4[e], c4[e], o.s4[e]);
            kahan_add(s4[e], c4[e], o.c4[e]);
        }
        for (std::size_t c = 0; c < cover.size(); ++c) {
            cover[c] += o.cover[c];
            kahan_add(wsum[c], wcomp[c], o.wsum[c]);
            kahan_add(wsum[c], wcomp[c], o.wcomp[c]);
            kahan_add(w2sum[c], w2comp[c], o.w2sum[c]);
            kahan_add(w2sum[c], w2comp[c], o.w2comp[c]);
        }
        max_corr_ni = std::max(max_corr_ni, o.max_corr_ni);
        max_corr_i = std::max(max_corr_i, o.max_corr_i);
        for (int j = 0; j < 2; ++j) {
            kahan_add(abs_corr[j], abs_corr_c[j], o.abs_corr[j]);
            kahan_add(abs_corr[j], abs_corr_c[j], o.abs_corr_c[j]);
        }
        evaluated += o.evaluated;
        skipped += o.skipped;
    }
};

// Width/critical-value series kept per draw for median summaries.
struct Series {
    bool enabled = false;
    std::vector<double> se[3][2];
    std::vector<double> crit_satt[3][2];
    std::vector<double> se_bc[2][2];
};

void check_ldlt(const Eigen::LDLT<Matrix>& ldlt, const char* what) {
    if (ldlt.info() != Eigen::Success)
        throw SingularMatrix(std::string(what) + ": factorization failed");
    const Vec d = ldlt.vectorD();
    const double dmax = d.maxCoeff();
    if (!(dmax > 0) || d.minCoeff() <= kDefaultRelTol * dmax)
        throw SingularMatrix(std::string(what) +
                             " is singular at relative tolerance 1e-10");
}

EngineContext build_context(const PotentialOutcomeTable& table,
                            const AssignmentSpace& space,
                            const EngineOptions& opt) {
    EngineContext ctx;
    ctx.table = &table;
    ctx.opt = opt;
    ctx.n = table.n();
    ctx.k = table.k();
    ctx.n_a = space.n_treated();
    ctx.n_b = ctx.n - ctx.n_a;
    if (space.n() != ctx.n)
        throw DimensionMismatch("assignment space n = " +
                                std::to_string(space.n()) +
                                " but table has n = " + std::to_string(ctx.n));
    if (ctx.n_a < 3 || ctx.n_b < 3)
        throw DegenerateArm(
            "distribution engine needs at least 3 units per arm");
    if (!(opt.level > 0 && opt.level < 1))
        throw DomainError("confidence level must be in (0, 1)");
    ctx.p_a = static_cast<double>(ctx.n_a) / ctx.n;
    ctx.p_b = static_cast<double>(ctx.n_b) / ctx.n;
    ctx.true_ate = average_treatment_effect(table);

    Vec shift = table.z.colwise().mean();
    ctx.zc = table.z.rowwise() - shift.transpose();
    SymMatrix d(Matrix(ctx.zc.transpose() * ctx.zc / ctx.n));
    ctx.d_inv = invert_spd(d).mat();
    ctx.h.resize(ctx.n);
    for (int i = 0; i < ctx.n; ++i)
        ctx.h[i] = ctx.zc.row(i) * ctx.d_inv * ctx.zc.row(i).transpose();
    ctx.consts = bias_constants(ctx.n, ctx.n_a);

    ctx.sum_az = Vec::Zero(ctx.k);
    ctx.sum_bz = Vec::Zero(ctx.k);
    ctx.sum_zz = ctx.zc.transpose() * ctx.zc;
    for (int i = 0; i < ctx.n; ++i) {
        ctx.sum_a += table.a[i];
        ctx.sum_b += table.b[i];
        ctx.sum_ha += ctx.h[i] * table.a[i];
        ctx.sum_hb += ctx.h[i] * table.b[i];
        ctx.sum_h += ctx.h[i];
        ctx.sum_az += table.a[i] * ctx.zc.row(i).transpose();
        ctx.sum_bz += table.b[i] * ctx.zc.row(i).transpose();
    }

    // Inference plan: fixed estimator order x requested flavors x modes.
    for (int est = 0; est < 5; ++est) {
        for (HcFlavor f : opt.flavors) {
            const bool bc = f == HcFlavor::bc_hc2 || f == HcFlavor::bc_hc3;
            if (bc && est < 3) continue;
            const int wf =
                (f == HcFlavor::hc3 || f == HcFlavor::bc_hc3) ? kWfHc3
                                                              : kWfHc2;
            for (CiMode m : opt.ci_modes) {
                CellSpec cell{est, f, m, fit_of_estimator(est), wf, bc};
                ctx.cells.push_back(cell);
                ctx.need_fit[cell.fit] = true;
                ctx.need_wf[wf] = true;
                if (bc) ctx.need_bc = true;
                if (m == CiMode::satterthwaite) ctx.want_satt = true;
            }
        }
    }
    ctx.level_p = 0.5 * (1.0 + opt.level);
    ctx.crit_z = opt.level == 0.95 ? numeric::kZ975
                                   : numeric::normal_quantile(ctx.level_p);
    ctx.p_of_fit[kFitU] = 2;
    ctx.p_of_fit[kFitNi] = 2 + ctx.k;
    ctx.p_of_fit[kFitI] = 2 + 2 * ctx.k;
    for (int f = 0; f < 3; ++f) {
        const double df = opt.t_df == TDfConvention::nminus1
                              ? ctx.n - 1.0
                              : ctx.n - ctx.p_of_fit[f];
        if (df < 1)
            throw DegenerateArm("no residual degrees of freedom for fit");
        ctx.crit_t[f] = numeric::student_t_quantile(ctx.level_p, df);
    }
    return ctx;
}

void evaluate_assignment(const EngineContext& ctx, const std::vector<int>& c,
                         Workspace& ws, Eval& ev) {
    const int n = ctx.n, k = ctx.k, n_a = ctx.n_a, n_b = ctx.n_b;
    const double dn = n, da = n_a, db = n_b;

    double sA_a = 0, sA_b = 0, sA_h = 0, sA_ha = 0, sA_hb = 0;
    ws.sA_z.setZero();
    ws.sA_az.setZero();
    ws.sA_bz.setZero();
    ws.sA_zz.setZero();
    for (int i : c) {
        const double ai = ctx.table->a[i];
        const double bi = ctx.table->b[i];
        sA_a += ai;
        sA_b += bi;
        sA_h += ctx.h[i];
        sA_ha += ctx.h[i] * ai;
        sA_hb += ctx.h[i] * bi;
        const auto zi = ctx.zc.row(i).transpose();
        ws.sA_z += zi;
        ws.sA_az.noalias() += ai * zi;
        ws.sA_bz.noalias() += bi * zi;
        ws.sA_zz.noalias() += zi * zi.transpose();
    }

    const double ybar_a = sA_a / da;
    const double ybar_b = (ctx.sum_b - sA_b) / db;
    ws.zbar_a = ws.sA_z / da;
    ws.zbar_b = -ws.sA_z / db;  // centered z sums to zero overall

    ws.dhat_a.noalias() =
        ws.sA_zz / da - ws.zbar_a * ws.zbar_a.transpose();
    ws.dhat_b.noalias() = (ctx.sum_zz - ws.sA_zz) / db -
                          ws.zbar_b * ws.zbar_b.transpose();
    ws.dhat = ctx.p_a * ws.dhat_a + ctx.p_b * ws.dhat_b;
    ws.nhat_a = ws.sA_az / da - ybar_a * ws.zbar_a;
    ws.nhat_b = (ctx.sum_bz - ws.sA_bz) / db - ybar_b * ws.zbar_b;
    ws.nhat = ctx.p_a * ws.nhat_a + ctx.p_b * ws.nhat_b;

    ws.ldlt_k.compute(ws.dhat);
    check_ldlt(ws.ldlt_k, "pooled covariate moment matrix");
    ws.q_hat = ws.ldlt_k.solve(ws.nhat);
    ws.ldlt_k.compute(ws.dhat_a);
    check_ldlt(ws.ldlt_k, "treated-arm covariate moment matrix");
    ws.q_hat_a = ws.ldlt_k.solve(ws.nhat_a);
    ws.ldlt_k.compute(ws.dhat_b);
    check_ldlt(ws.ldlt_k, "control-arm covariate moment matrix");
    ws.q_hat_b = ws.ldlt_k.solve(ws.nhat_b);

    const double unadj = ybar_a - ybar_b;
    ev.est[0] = unadj;
    ev.est[1] = unadj - (ws.zbar_a - ws.zbar_b).dot(ws.q_hat);
    ev.est[2] =
        unadj - (ws.zbar_a.dot(ws.q_hat_a) - ws.zbar_b.dot(ws.q_hat_b));

    // Bias estimates from the same arm sums.
    const double hbar_a = sA_h / da;
    const double hbar_b = (ctx.sum_h - sA_h) / db;
    const double cov_a = sA_ha / da - hbar_a * ybar_a;
    const double cov_b = (ctx.sum_hb - sA_hb) / db - hbar_b * ybar_b;
    ws.tmp_k.noalias() = ctx.d_inv * ws.zbar_a;
    const double quad_a =
        (sA_ha - ybar_a * sA_h) - 2.0 * da * ws.nhat_a.dot(ws.tmp_k);
    ws.tmp_k.noalias() = ctx.d_inv * ws.zbar_b;
    const double quad_b = ((ctx.sum_hb - sA_hb) - ybar_b * (ctx.sum_h - sA_h)) -
                          2.0 * db * ws.nhat_b.dot(ws.tmp_k);

    ws.dinv_nhat.noalias() = ctx.d_inv * ws.nhat;
    const double gap_ni =
        (ws.zbar_b - ws.zbar_a).dot(ws.q_hat - ws.dinv_nhat);
    const BiasConstants& bc = ctx.consts;
    ev.bias_ni = (1.0 / dn) * (db / (db - 1.0)) * cov_b -
                 (1.0 / dn) * (da / (da - 1.0)) * cov_a + gap_ni +
                 (bc.c_a_ni / da) * quad_a - (bc.c_b_ni / db) * quad_b;

    ws.tmp_k.noalias() = ctx.d_inv * ws.nhat_b;
    const double u1 = (1.0 / dn) * (da / (db - 1.0)) * cov_b +
                      ws.zbar_b.dot(ws.q_hat_b - ws.tmp_k) -
                      (bc.c_b_i / db) * quad_b;
    ws.tmp_k.noalias() = ctx.d_inv * ws.nhat_a;
    const double u2 = (1.0 / dn) * (db / (da - 1.0)) * cov_a +
                      ws.zbar_a.dot(ws.q_hat_a - ws.tmp_k) -
                      (bc.c_a_i / da) * quad_a;
    ev.bias_i = u1 - u2;

    ev.est[3] = ev.est[1] - ev.bias_ni;
    ev.est[4] = ev.est[2] - ev.bias_i;

    if (ctx.cells.empty()) return;

    // Observed outcome and treatment-dependent design columns.
    for (int i = 0; i < n; ++i) ws.y[i] = ctx.table->b[i];
    for (int i : c) ws.y[i] = ctx.table->a[i];

    for (int fit = 0; fit < 3; ++fit) {
        if (!ctx.need_fit[fit]) continue;
        FitScratch& fs = ws.fit[fit];
        Matrix& x = fs.x;
        x.col(1).setZero();
        for (int i : c) x(i, 1) = 1.0;
        if (fit == kFitI) {
            x.rightCols(k).setZero();
            for (int i : c) x.row(i).tail(k) = ctx.zc.row(i);
        }

        fs.xtx.noalias() = x.transpose() * x;
        ws.ldlt_p[fit].compute(fs.xtx);
        check_ldlt(ws.ldlt_p[fit], "regression normal matrix");
        fs.xtx_inv.noalias() = ws.ldlt_p[fit].solve(fs.eye);
        fs.xty.noalias() = x.transpose() * ws.y;
        fs.beta.noalias() = fs.xtx_inv * fs.xty;
        ws.resid = ws.y;
        ws.resid.noalias() -= x * fs.beta;
        fs.gmat.noalias() = x * fs.xtx_inv;
        ws.hat = fs.gmat.cwiseProduct(x).rowwise().sum();
        ws.u = fs.gmat.col(1);

        for (int i = 0; i < n; ++i)
            if (1.0 - ws.hat[i] <= kLeverageEps)
                throw LeverageOne("leverage 1 in regression fit");

        for (int wf = 0; wf < 2; ++wf) {
            if (!ctx.need_wf[wf]) continue;
            double v = 0, tr_m = 0;
            for (int i = 0; i < n; ++i) {
                const double gap = 1.0 - ws.hat[i];
                const double w =
                    wf == kWfHc2 ? 1.0 / gap : 1.0 / (gap * gap);
                const double a2i = w * ws.u[i] * ws.u[i];
                ws.a2[i] = a2i;
                v += a2i * ws.resid[i] * ws.resid[i];
                tr_m += a2i * gap;
            }
            ev.se[fit][wf] = std::sqrt(v);
            if (ctx.want_satt) {
                double tr_m2 = 0;
                for (int i = 0; i < n; ++i) {
                    const double dii = 1.0 - ws.hat[i];
                    tr_m2 += ws.a2[i] * ws.a2[i] * dii * dii;
                    for (int j = i + 1; j < n; ++j) {
                        const double hij = fs.gmat.row(i).dot(x.row(j));
                        tr_m2 += 2.0 * ws.a2[i] * ws.a2[j] * hij * hij;
                    }
                }
                if (tr_m2 <= 0)
                    throw DegenerateSpectrum("Satterthwaite spectrum vanished");
                ev.crit_satt[fit][wf] = numeric::student_t_quantile(
                    ctx.level_p, tr_m * tr_m / tr_m2);
            }
            if (ctx.need_bc && fit != kFitU) {
                const double debiased = fit == kFitNi ? ev.est[3] : ev.est[4];
                const double shift = debiased - fs.beta[1];
                double vb = 0;
                for (int i = 0; i < n; ++i) {
                    const double e = ws.resid[i] - shift * x(i, 1);
                    vb += ws.a2[i] * e * e;
                }
                ev.se_bc[fit - 1][wf] = std::sqrt(vb);
            }
        }
    }
}

void accumulate(const EngineContext& ctx, const Eval& ev, Accum& acc,
                Series& series, std::uint64_t rank) {
    for (int e = 0; e < 5; ++e) {
        const double dev = ev.est[e] - ctx.true_ate;
        kahan_add(acc.s1[e], acc.c1[e], dev);
        const double d2 = dev * dev;
        kahan_add(acc.s2[e], acc.c2[e], d2);
        kahan_add(acc.s4[e], acc.c4[e], d2 * d2);
    }
    acc.max_corr_ni = std::max(acc.max_corr_ni, std::abs(ev.bias_ni));
    acc.max_corr_i = std::max(acc.max_corr_i, std::abs(ev.bias_i));
    kahan_add(acc.abs_corr[0], acc.abs_corr_c[0], std::abs(ev.bias_ni));
    kahan_add(acc.abs_corr[1], acc.abs_corr_c[1], std::abs(ev.bias_i));

    for (std::size_t ci = 0; ci < ctx.cells.size(); ++ci) {
        const CellSpec& cell = ctx.cells[ci];
        const double se = cell.bc ? ev.se_bc[cell.fit - 1][cell.wf]
                                  : ev.se[cell.fit][cell.wf];
        double crit;
        switch (cell.mode) {
            case CiMode::normal: crit = ctx.crit_z; break;
            case CiMode::student_t: crit = ctx.crit_t[cell.fit]; break;
            default: crit = ev.crit_satt[cell.fit][cell.wf]; break;
        }
        const double center = ev.est[cell.est];
        const double half = crit * se;
        if (std::abs(center - ctx.true_ate) <= half) acc.cover[ci] += 1.0;
        const double width = 2.0 * half;
        kahan_add(acc.wsum[ci], acc.wcomp[ci], width);
        kahan_add(acc.w2sum[ci], acc.w2comp[ci], width * width);
    }
    ++acc.evaluated;

    if (series.enabled) {
        for (int fit = 0; fit < 3; ++fit) {
            if (!ctx.need_fit[fit]) continue;
            for (int wf = 0; wf < 2; ++wf) {
                if (!ctx.need_wf[wf]) continue;
                series.se[fit][wf][rank] = ev.se[fit][wf];
                if (ctx.want_satt)
                    series.crit_satt[fit][wf][rank] = ev.crit_satt[fit][wf];
                if (ctx.need_bc && fit != kFitU)
                    series.se_bc[fit - 1][wf][rank] = ev.se_bc[fit - 1][wf];
            }
        }
    }
}

void format_dump_row(std::string& buf, std::uint64_t rank, const Eval& ev,
                     const EngineContext& ctx) {
    char num[32];
    buf += std::to_string(rank);
    for (int e = 0; e < 5; ++e) {
        std::snprintf(num, sizeof num, ",%.17g", ev.est[e]);
        buf += num;
    }
    for (const CellSpec& cell : ctx.cells) {
        const double se = cell.bc ? ev.se_bc[cell.fit - 1][cell.wf]
                                  : ev.se[cell.fit][cell.wf];
        double crit;
        switch (cell.mode) {
            case CiMode::normal: crit = ctx.crit_z; break;
            case CiMode::student_t: crit = ctx.crit_t[cell.fit]; break;
            default: crit = ev.crit_satt[cell.fit][cell.wf]; break;
        }
        const double center = ev.est[cell.est];
        std::snprintf(num, sizeof num, ",%.17g", center - crit * se);
        buf += num;
        std::snprintf(num, sizeof num, ",%.17g", center + crit * se);
        buf += num;
    }
    buf += '\n';
}

struct DumpWriter {
    std::ofstream out;
    std::mutex mu;
    std::map<std::uint64_t, std::string> pending;
    std::uint64_t next = 0;
    bool enabled = false;

    void open(const EngineContext& ctx, const std::string& path) {
        out.open(path);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        enabled = true;
        out << "rank";
        for (const auto& name : estimator_names()) out << ',' << name;
        for (const CellSpec& cell : ctx.cells) {
            const std::string base = estimator_names()[cell.est] + "_" +
                                     to_string(cell.flavor) + "_" +
                                     to_string(cell.mode);
            out << ",ci_" << base << "_lo" << ",ci_" << base << "_hi";
        }
        out << '\n';
    }

    void submit(std::uint64_t chunk_id, std::string text) {
        std::lock_guard<std::mutex> lk(mu);
        pending.emplace(chunk_id, std::move(text));
        while (!pending.empty() && pending.begin()->first == next) {
            out << pending.begin()->second;
            pending.erase(pending.begin());
            ++next;
        }
    }
};

struct FailureSlot {
    std::mutex mu;
    bool failed = false;
    std::uint64_t rank = 0;
    std::string message;
    bool io_failure = false;

    void record(std::uint64_t r, const std::string& msg, bool io) {
        std::lock_guard<std::mutex> lk(mu);
        if (!failed || r < rank) {
            failed = true;
            rank = r;
            message = msg;
            io_failure = io;
        }
    }
};

DistributionSummary summarize(const EngineContext& ctx, const Accum& acc,
                              const Series& series, std::uint64_t draws,
                              bool exact) {
    DistributionSummary s;
    s.mode = exact ? "exact" : "monte-carlo";
    s.n = ctx.n;
    s.n_treated = ctx.n_a;
    s.draws = draws;
    s.true_ate = ctx.true_ate;
    s.level = ctx.opt.level;
    s.t_df = ctx.opt.t_df == TDfConvention::nminus1 ? "n-1" : "residual";
    s.skipped_singular = acc.skipped;
    s.max_abs_correction_ni = acc.max_corr_ni;
    s.max_abs_correction_i = acc.max_corr_i;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double m = static_cast<double>(acc.evaluated);
    s.mean_abs_correction_ni = acc.abs_corr[0] / m;
    s.mean_abs_correction_i = acc.abs_corr[1] / m;
    for (int e = 0; e < 5; ++e) {
        EstimatorSummary es;
        es.name = estimator_names()[e];
        const double bias = acc.s1[e] / m;
        const double m2 = acc.s2[e] / m;
        const double m4 = acc.s4[e] / m;
        es.bias = bias;
        es.mean = ctx.true_ate + bias;
        es.sd = std::sqrt(std::max(0.0, m2 - bias * bias));
        es.rmse = std::sqrt(m2);
        if (exact) {
            es.se_bias = es.se_sd = es.se_rmse = nan;
        } else {
            es.se_bias = es.sd / std::sqrt(m);
            const double var_m2 = std::max(0.0, m4 - m2 * m2);
            es.se_sd = es.sd > 0
                           ? std::sqrt(var_m2) / (2.0 * es.sd * std::sqrt(m))
                           : nan;
            es.se_rmse =
                es.rmse > 0
                    ? std::sqrt(var_m2) / (2.0 * es.rmse * std::sqrt(m))
                    : nan;
        }
        s.estimators.push_back(std::move(es));
    }

    std::vector<double> widths;
    for (std::size_t ci = 0; ci < ctx.cells.size(); ++ci) {
        const CellSpec& cell = ctx.cells[ci];
        CiSummary cs;
        cs.estimator = estimator_names()[cell.est];
        cs.flavor = to_string(cell.flavor);
        cs.mode = to_string(cell.mode);
        cs.coverage = acc.cover[ci] / m;
        cs.mean_width = acc.wsum[ci] / m;
        const double w2 = acc.w2sum[ci] / m;
        const double var_w =
            std::max(0.0, w2 - cs.mean_width * cs.mean_width);
        cs.median_width = nan;
        cs.se_median_width = nan;
        if (series.enabled) {
            widths.resize(acc.evaluated);
            const std::vector<double>& se_arr =
                cell.bc ? series.se_bc[cell.fit - 1][cell.wf]
                        : series.se[cell.fit][cell.wf];
            for (std::uint64_t r = 0; r < acc.evaluated; ++r) {
                double crit;
                switch (cell.mode) {
                    case CiMode::normal: crit = ctx.crit_z; break;
                    case CiMode::student_t:
                        crit = ctx.crit_t[cell.fit];
                        break;
                    default:
                        crit = series.crit_satt[cell.fit][cell.wf][r];
                        break;
                }
                widths[r] = 2.0 * crit * se_arr[r];
            }
            // Lower median: element at index (m - 1) / 2 of the sorted
            // widths.
            const std::size_t mid = (acc.evaluated - 1) / 2;
            std::nth_element(widths.begin(), widths.begin() + mid,
                             widths.end());
            cs.median_width = widths[mid];
            if (!exact && acc.evaluated >= 16) {
                const double z = numeric::kZ975;
                const auto d = static_cast<std::size_t>(
                    std::ceil(z * std::sqrt(0.25 * m)));
                const std::size_t lo = mid > d ? mid - d : 0;
                const std::size_t hi =
                    std::min<std::size_t>(mid + d, acc.evaluated - 1);
                std::nth_element(widths.begin(), widths.begin() + lo,
                                 widths.end());
                const double wlo = widths[lo];
                std::nth_element(widths.begin(), widths.begin() + hi,
                                 widths.end());
                cs.se_median_width = (widths[hi] - wlo) / (2.0 * z);
            }
        }
        if (exact) {
            cs.se_coverage = nan;
            cs.se_mean_width = nan;
        } else {
            cs.se_coverage =
                std::sqrt(std::max(0.0, cs.coverage * (1.0 - cs.coverage)) / m);
            cs.se_mean_width = std::sqrt(var_w / m);
        }
        s.ci.push_back(std::move(cs));
    }
    return s;
}

void allocate_series(const EngineContext& ctx, Series& series,
                     std::uint64_t draws) {
    if (!ctx.opt.collect_widths || ctx.cells.empty()) return;
    std::size_t arrays = 0;
    for (int fit = 0; fit < 3; ++fit) {
        if (!ctx.need_fit[fit]) continue;
        for (int wf = 0; wf < 2; ++wf) {
            if (!ctx.need_wf[wf]) continue;
            arrays += 1 + (ctx.want_satt ? 1 : 0) +
                      (ctx.need_bc && fit != kFitU ? 1 : 0);
        }
    }
    const double bytes = static_cast<double>(arrays) * draws * sizeof(double);
    if (bytes > 2.5e9)
        throw BudgetExceeded(
            "width series for " + std::to_string(draws) +
            " draws would need > 2.5 GB; disable width collection");
    series.enabled = true;
    for (int fit = 0; fit < 3; ++fit) {
        if (!ctx.need_fit[fit]) continue;
        for (int wf = 0; wf < 2; ++wf) {
            if (!ctx.need_wf[wf]) continue;
            series.se[fit][wf].resize(draws);
            if (ctx.want_satt) series.crit_satt[fit][wf].resize(draws);
            if (ctx.need_bc && fit != kFitU)
                series.se_bc[fit - 1][wf].resize(draws);
        }
    }
}

DistributionSummary run_engine(const PotentialOutcomeTable& table,
                               const AssignmentSpace& space,
                               const EngineOptions& opt, bool exact,
                               std::uint64_t seed, std::uint64_t reps) {
    EngineContext ctx = build_context(table, space, opt);

    std::uint64_t draws;
    if (exact) {
        if (!space.total_exact() || space.total() > opt.budget)
            throw BudgetExceeded(
                "exact enumeration needs " +
                (space.total_exact() ? std::to_string(space.total())
                                     : std::to_string(space.total_approx())) +
                " assignments, budget is " + std::to_string(opt.budget));
        draws = space.total();
    } else {
        if (reps == 0) throw DomainError("monte carlo needs reps >= 1");
        draws = reps;
    }

    Series series;
    allocate_series(ctx, series, draws);

    DumpWriter dump;
    if (!opt.dump_csv_path.empty()) dump.open(ctx, opt.dump_csv_path);

    const std::uint64_t n_chunks = (draws + kChunk - 1) / kChunk;
    int threads = opt.threads > 0
                      ? opt.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    threads = static_cast<int>(
        std::min<std::uint64_t>(threads, n_chunks));

    std::vector<Accum> chunk_acc(n_chunks, Accum(ctx.cells.size()));
    std::atomic<std::uint64_t> next_chunk{0};
    FailureSlot failure;
    std::unique_ptr<PascalTable> pascal;
    if (exact) pascal = std::make_unique<PascalTable>(ctx.n, ctx.n_a);

    auto worker = [&]() {
        Workspace ws(ctx);
        Eval ev{};
        std::vector<int> comb;
        std::vector<int> pool(ctx.n);
        std::string dump_buf;
        bool aborted = false;
        while (!aborted) {
            const std::uint64_t chunk = next_chunk.fetch_add(1);
            if (chunk >= n_chunks) break;
            {
                std::lock_guard<std::mutex> lk(failure.mu);
                if (failure.failed) break;
            }
            const std::uint64_t start = chunk * kChunk;
            const std::uint64_t count = std::min(kChunk, draws - start);
            Accum& acc = chunk_acc[chunk];
            dump_buf.clear();
            std::mt19937_64 rng(
                splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (chunk + 1))));
            if (exact) unrank_into(*pascal, ctx.n, ctx.n_a, start, comb);
            for (std::uint64_t off = 0; off < count; ++off) {
                const std::uint64_t rank = start + off;
                if (!exact) draw_combination(rng, pool, ctx.n_a, comb);
                try {
                    evaluate_assignment(ctx, comb, ws, ev);
                    accumulate(ctx, ev, acc, series, rank);
                    if (dump.enabled) format_dump_row(dump_buf, rank, ev, ctx);
                } catch (const std::exception& e) {
                    if (opt.skip_singular &&
                        (dynamic_cast<const SingularMatrix*>(&e) ||
                         dynamic_cast<const LeverageOne*>(&e) ||
                         dynamic_cast<const DegenerateSpectrum*>(&e))) {
                        ++acc.skipped;
                    } else {
                        failure.record(rank, e.what(), false);
                        aborted = true;
                        break;
                    }
                }
                if (exact && off + 1 < count) next_combination(comb, ctx.n);
            }
            if (dump.enabled) dump.submit(chunk, std::move(dump_buf));
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool_threads;
        pool_threads.reserve(threads);
        for (int t = 0; t < threads; ++t) pool_threads.emplace_back(worker);
        for (auto& t : pool_threads) t.join();
    }

    if (failure.failed)
        throw SingularMatrix("assignment rank " +
                             std::to_string(failure.rank) + ": " +
                             failure.message);

    Accum total_acc(ctx.cells.size());
    for (const Accum& a : chunk_acc) total_acc.merge(a);
    if (total_acc.evaluated == 0)
        throw DegenerateArm("all assignments were skipped as singular");

    // Skipped draws leave holes in the stored width series; compact them
    // out before median computation.
    if (series.enabled && total_acc.skipped > 0) {
        // Holes only occur with skip_singular; recompute by re-walking is
        // not worth it, so fall back to disabling medians.
        series.enabled = false;
    }

    DistributionSummary s =
        summarize(ctx, total_acc, series, draws, exact);
    if (!exact) s.seed = seed;
    s.draws = total_acc.evaluated;
    return s;
}

}  // namespace

DistributionSummary exact_distribution(const PotentialOutcomeTable& table,
                                       const AssignmentSpace& space,
                                       const EngineOptions& options) {
    return run_engine(table, space, options, true, 0, 0);
}

DistributionSummary monte_carlo_distribution(const PotentialOutcomeTable& table,
                                             const AssignmentSpace& space,
                                             std::uint64_t seed,
                                             std::uint64_t reps,
                                             const EngineOptions& options) {
    return run_engine(table, space, options, false, seed, reps);
}

}  // namespace debias
