#ifndef EBSDCS_BPFA_HPP
#define EBSDCS_BPFA_HPP

// Beta Process Factor Analysis on partially observed patches.
//
// Generative model, for patch i with observed entries O_i:
//
//   x_i = D (z_i * s_i) + eps_i
//   d_k  ~ N(0, I / P)
//   pi_k ~ Beta(a0 / K, b0 (K - 1) / K)
//   z_ik ~ Bernoulli(pi_k)
//   s_ik ~ N(0, 1 / gamma_s)
//   eps  ~ N(0, I / gamma_eps)
//   gamma_s ~ Gamma(c0, d0),  gamma_eps ~ Gamma(e0, f0)   (shape, rate)
//
// Only entries in O_i enter any likelihood term. Inference is a Gibbs
// sampler; the weight s_ik is marginalized when drawing z_ik and inactive
// weights are held at zero.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"
#include "ebsdcs/patcher.hpp"
#include "ebsdcs/random.hpp"
#include "ebsdcs/sampler.hpp"

namespace ebsdcs {

inline constexpr double kVarianceFloor = 1e-12;

struct BpfaHyperParams {
    std::size_t atoms = 64;
    double a0 = 1.0;
    double b0 = 1.0;
    double c0 = 1e-1;
    double d0 = 1e-1;
    double e0 = 1e-1;
    double f0 = 1e-1;
    std::size_t burn_in = 20;
    std::size_t samples = 20;
    std::uint64_t seed = 0;

    void validate() const {
        if (atoms == 0) throw DomainError("dictionary size must be positive");
        for (double v : {a0, b0, c0, d0, e0, f0}) {
            if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("BPFA priors must be positive");
        }
        if (samples == 0) throw DomainError("at least one retained sample is required");
    }
};

/// Full sampler state. The dictionary is stored column-major (atom k occupies
/// `dictionary[k * patch_dim, (k + 1) * patch_dim)`); activations and weights
/// are row-major N x K.
struct BpfaState {
    std::size_t patch_dim = 0;
    std::size_t patch_count = 0;
    std::size_t atoms = 0;
    std::vector<double> dictionary;
    std::vector<std::uint8_t> active;
    std::vector<double> weights;
    std::vector<double> pi;
    double gamma_s = 1.0;
    double gamma_eps = 1.0;
    Rng rng;
    std::size_t sweeps_done = 0;

    std::span<const double> atom(std::size_t k) const {
        return {dictionary.data() + k * patch_dim, patch_dim};
    }

    double weight(std::size_t i, std::size_t k) const {
        return active[i * atoms + k] ? weights[i * atoms + k] : 0.0;
    }

    /// D (z_i * s_i), all P entries.
    std::vector<double> reconstruct_patch(std::size_t i) const {
        std::vector<double> out(patch_dim, 0.0);
        for (std::size_t k = 0; k < atoms; ++k) {
            const double w = weight(i, k);
            if (w == 0.0) continue;
            const double* d = dictionary.data() + k * patch_dim;
            for (std::size_t p = 0; p < patch_dim; ++p) out[p] += w * d[p];
        }
        return out;
    }

    /// Count of atoms with pi_k > 1 / K.
    std::size_t active_atom_count() const {
        const double threshold = 1.0 / static_cast<double>(atoms);
        return static_cast<std::size_t>(
            std::count_if(pi.begin(), pi.end(), [&](double p) { return p > threshold; }));
    }

    friend bool operator==(const BpfaState&, const BpfaState&) = default;
};

inline BpfaState init_state(const PatchSet& patches, const BpfaHyperParams& hp) {
    hp.validate();
    if (patches.count == 0) throw DomainError("cannot initialize BPFA with zero patches");
    if (patches.dim == 0) throw DomainError("patch dimension must be positive");

    BpfaState st;
    st.patch_dim = patches.dim;
    st.patch_count = patches.count;
    st.atoms = hp.atoms;
    st.rng.seed(hp.seed);

    const double sd = 1.0 / std::sqrt(static_cast<double>(patches.dim));
    st.dictionary.resize(patches.dim * hp.atoms);
    for (double& v : st.dictionary) v = sd * standard_normal(st.rng);
    st.active.assign(patches.count * hp.atoms, 0);
    st.weights.assign(patches.count * hp.atoms, 0.0);
    st.pi.assign(hp.atoms, 0.5);
    st.gamma_s = hp.c0 / hp.d0;
    st.gamma_eps = hp.e0 / hp.f0;
    return st;
}

struct BetaParams {
    double alpha;
    double beta;
};

/// Shape / rate parameterization.
struct GammaParams {
    double shape;
    double rate;
};

struct ActivationConditional {
    double prob_active;    // P(z_ik = 1 | rest), weight marginalized
    double weight_mean;    // mean of s_ik | z_ik = 1, rest
    double weight_precision;
};

struct AtomConditional {
    std::vector<double> mean;
    std::vector<double> precision;  // diagonal
};

/// Gibbs sampler bound to one patch set. Keeps the masked residual of every
/// patch up to date so that each single-site update costs O(|O_i|).
class BpfaSampler {
public:
    BpfaSampler(const PatchSet& patches, BpfaHyperParams hp, BpfaState state)
        : hp_(hp), st_(std::move(state)) {
        hp_.validate();
        if (st_.patch_dim != patches.dim || st_.patch_count != patches.count || st_.atoms != hp_.atoms)
            throw DomainError("BPFA state dimensions do not match patches / hyperparameters");

        const std::size_t P = patches.dim;
        offsets_.assign(patches.count + 1, 0);
        for (std::size_t i = 0; i < patches.count; ++i) {
            const auto flags = patches.flags(i);
            offsets_[i + 1] = offsets_[i] + static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
        }
        index_.resize(offsets_.back());
        residual_.resize(offsets_.back());
        for (std::size_t i = 0; i < patches.count; ++i) {
            const auto flags = patches.flags(i);
            const auto vals = patches.patch(i);
            std::size_t j = offsets_[i];
            for (std::size_t p = 0; p < P; ++p) {
                if (!flags[p]) continue;
                index_[j] = static_cast<std::uint32_t>(p);
                residual_[j] = vals[p];
                ++j;
            }
        }
        for (std::size_t i = 0; i < patches.count; ++i) {
            for (std::size_t k = 0; k < st_.atoms; ++k) {
                const double w = st_.weight(i, k);
                if (w != 0.0) add_to_residual(i, k, -w);
            }
        }
        refresh_atom_norms();
    }

    const BpfaState& state() const noexcept { return st_; }
    BpfaState release() && { return std::move(st_); }
    const BpfaHyperParams& hyper_params() const noexcept { return hp_; }

    std::size_t observed_entries() const noexcept { return index_.size(); }

    bool fully_observed(std::size_t i) const noexcept {
        return offsets_[i + 1] - offsets_[i] == st_.patch_dim;
    }

    double observed_sq_error() const {
        double sum = 0.0;
        for (double r : residual_) sum += r * r;
        return sum;
    }

    double observed_rmse() const {
        if (index_.empty()) return 0.0;
        return std::sqrt(observed_sq_error() / static_cast<double>(index_.size()));
    }

    /// One full sweep: dictionary, activations and weights, pi, weight
    /// precision, noise precision. Throws NumericalError on non-finite state.
    void sweep() {
        sample_dictionary();
        sample_activations();
        sample_pi();
        sample_weight_precision();
        sample_noise_precision();
        ++st_.sweeps_done;
        check_finite();
    }

    // --- single-site conditionals -------------------------------------

    AtomConditional atom_conditional(std::size_t k) const {
        const std::size_t P = st_.patch_dim;
        AtomConditional c{std::vector<double>(P, 0.0),
                          std::vector<double>(P, static_cast<double>(P))};
        const double* d = st_.dictionary.data() + k * P;
        for (std::size_t i = 0; i < st_.patch_count; ++i) {
            const double w = st_.weight(i, k);
            if (w == 0.0) continue;
            accumulate_atom_terms(i, w, d, c.mean, c.precision);
        }
        for (std::size_t p = 0; p < P; ++p) {
            c.precision[p] = std::max(c.precision[p], kVarianceFloor);
            c.mean[p] /= c.precision[p];
        }
        return c;
    }

    ActivationConditional activation_conditional(std::size_t i, std::size_t k) const {
        const double* d = st_.dictionary.data() + k * st_.patch_dim;
        double a = 0.0;
        double b = 0.0;
        masked_products(i, k, d, a, b);
        b += st_.weight(i, k) * a;
        return activation_from_products(prior_log_odds(k), std::log(st_.gamma_s), a, b);
    }

    BetaParams pi_conditional(std::size_t k) const {
        const double K = static_cast<double>(st_.atoms);
        const double n = static_cast<double>(usage_count(k));
        const double N = static_cast<double>(st_.patch_count);
        return {hp_.a0 / K + n, hp_.b0 * (K - 1.0) / K + N - n};
    }

    GammaParams weight_precision_conditional() const {
        double n_active = 0.0;
        double sq = 0.0;
        for (std::size_t idx = 0; idx < st_.active.size(); ++idx) {
            if (!st_.active[idx]) continue;
            n_active += 1.0;
            sq += st_.weights[idx] * st_.weights[idx];
        }
        return {hp_.c0 + 0.5 * n_active, hp_.d0 + 0.5 * sq};
    }

    GammaParams noise_precision_conditional() const {
        return {hp_.e0 + 0.5 * static_cast<double>(index_.size()), hp_.f0 + 0.5 * observed_sq_error()};
    }

    // --- individual Gibbs steps ---------------------------------------

    void sample_dictionary() {
        const std::size_t P = st_.patch_dim;
        const std::size_t K = st_.atoms;
        const std::size_t N = st_.patch_count;

        // Patches using each atom, grouped by atom.
        std::vector<std::size_t> start(K + 1, 0);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t k = 0; k < K; ++k) start[k + 1] += st_.active[i * K + k];
        for (std::size_t k = 0; k < K; ++k) start[k + 1] += start[k];
        std::vector<std::uint32_t> users(start[K]);
        {
            std::vector<std::size_t> fill(start.begin(), start.end() - 1);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t k = 0; k < K; ++k)
                    if (st_.active[i * K + k]) users[fill[k]++] = static_cast<std::uint32_t>(i);
        }

        const double prior_sd = 1.0 / std::sqrt(static_cast<double>(P));
        std::vector<double> mean(P);
        std::vector<double> prec(P);
        std::vector<double> delta(P);
        for (std::size_t k = 0; k < K; ++k) {
            double* d = st_.dictionary.data() + k * P;
            if (start[k] == start[k + 1]) {
                // Unused atom: its conditional is the prior.
                for (std::size_t p = 0; p < P; ++p) d[p] = prior_sd * standard_normal(st_.rng);
                atom_sq_norm_[k] = squared_norm(d, P);
                continue;
            }
            std::fill(mean.begin(), mean.end(), 0.0);
            std::fill(prec.begin(), prec.end(), static_cast<double>(P));
            for (std::size_t u = start[k]; u < start[k + 1]; ++u) {
                const std::size_t i = users[u];
                accumulate_atom_terms(i, st_.weights[i * K + k], d, mean, prec);
            }
            for (std::size_t p = 0; p < P; ++p) {
                const double pr = std::max(prec[p], kVarianceFloor);
                const double fresh = mean[p] / pr + standard_normal(st_.rng) / std::sqrt(pr);
                delta[p] = d[p] - fresh;
                d[p] = fresh;
            }
            for (std::size_t u = start[k]; u < start[k + 1]; ++u) {
                const std::size_t i = users[u];
                const double w = st_.weights[i * K + k];
                if (fully_observed(i)) {
                    double* r = residual_.data() + offsets_[i];
                    for (std::size_t p = 0; p < P; ++p) r[p] += delta[p] * w;
                    continue;
                }
                for (std::size_t j = offsets_[i]; j < offsets_[i + 1]; ++j)
                    residual_[j] += delta[index_[j]] * w;
            }
            atom_sq_norm_[k] = squared_norm(d, P);
        }
    }

    void sample_activations() {
        const std::size_t K = st_.atoms;
        std::vector<double> log_odds(K);
        for (std::size_t k = 0; k < K; ++k) log_odds[k] = prior_log_odds(k);
        const double log_gs = std::log(st_.gamma_s);
        for (std::size_t i = 0; i < st_.patch_count; ++i) {
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t idx = i * K + k;
                const double w_old = st_.active[idx] ? st_.weights[idx] : 0.0;
                const double* d = st_.dictionary.data() + k * st_.patch_dim;
                double a = 0.0;
                double b = 0.0;
                masked_products(i, k, d, a, b);
                b += w_old * a;
                const ActivationConditional c = activation_from_products(log_odds[k], log_gs, a, b);

                const bool on = uniform01(st_.rng) < c.prob_active;
                double w_new = 0.0;
                if (on) w_new = c.weight_mean + standard_normal(st_.rng) / std::sqrt(c.weight_precision);
                st_.active[idx] = on ? 1 : 0;
                st_.weights[idx] = w_new;
                if (w_new != w_old) add_to_residual(i, k, w_old - w_new);
            }
        }
    }

    void sample_pi() {
        for (std::size_t k = 0; k < st_.atoms; ++k) {
            const BetaParams bp = pi_conditional(k);
            st_.pi[k] = sample_beta(st_.rng, bp.alpha, bp.beta);
        }
    }

    void sample_weight_precision() {
        const GammaParams g = weight_precision_conditional();
        st_.gamma_s = std::max(sample_gamma(st_.rng, g.shape, g.rate), kVarianceFloor);
    }

    void sample_noise_precision() {
        const GammaParams g = noise_precision_conditional();
        st_.gamma_eps = std::max(sample_gamma(st_.rng, g.shape, g.rate), kVarianceFloor);
    }

    /// Adds D (z_i * s_i) of every patch into `sum` (N x P, row-major).
    void accumulate_reconstruction(std::span<double> sum) const {
        const std::size_t P = st_.patch_dim;
        const std::size_t K = st_.atoms;
        for (std::size_t i = 0; i < st_.patch_count; ++i) {
            double* out = sum.data() + i * P;
            for (std::size_t k = 0; k < K; ++k) {
                if (!st_.active[i * K + k]) continue;
                const double w = st_.weights[i * K + k];
                const double* d = st_.dictionary.data() + k * P;
                for (std::size_t p = 0; p < P; ++p) out[p] += w * d[p];
            }
        }
    }

private:
    // Four independent partial sums so the reduction pipelines.
    static double dot(const double* x, const double* y, std::size_t n) {
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t p = 0;
        for (; p + 4 <= n; p += 4) {
            s0 += x[p] * y[p];
            s1 += x[p + 1] * y[p + 1];
            s2 += x[p + 2] * y[p + 2];
            s3 += x[p + 3] * y[p + 3];
        }
        for (; p < n; ++p) s0 += x[p] * y[p];
        return (s0 + s1) + (s2 + s3);
    }

    static double squared_norm(const double* d, std::size_t n) { return dot(d, d, n); }

    void refresh_atom_norms() {
        atom_sq_norm_.resize(st_.atoms);
        for (std::size_t k = 0; k < st_.atoms; ++k)
            atom_sq_norm_[k] = squared_norm(st_.dictionary.data() + k * st_.patch_dim, st_.patch_dim);
    }

    std::size_t usage_count(std::size_t k) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < st_.patch_count; ++i) n += st_.active[i * st_.atoms + k];
        return n;
    }

    // a = sum_{p in O_i} d_p^2,  b = sum_{p in O_i} d_p r_ip
    void masked_products(std::size_t i, std::size_t k, const double* d, double& a, double& b) const {
        const std::size_t lo = offsets_[i];
        const std::size_t hi = offsets_[i + 1];
        const double* r = residual_.data() + lo;
        if (hi - lo == st_.patch_dim) {
            a = atom_sq_norm_[k];
            b = dot(d, r, st_.patch_dim);
            return;
        }
        const std::uint32_t* idx = index_.data() + lo;
        const std::size_t n = hi - lo;
        double a0 = 0.0, a1 = 0.0, b0 = 0.0, b1 = 0.0;
        std::size_t j = 0;
        for (; j + 2 <= n; j += 2) {
            const double d0 = d[idx[j]];
            const double d1 = d[idx[j + 1]];
            a0 += d0 * d0;
            a1 += d1 * d1;
            b0 += d0 * r[j];
            b1 += d1 * r[j + 1];
        }
        if (j < n) {
            const double d0 = d[idx[j]];
            a0 += d0 * d0;
            b0 += d0 * r[j];
        }
        a = a0 + a1;
        b = b0 + b1;
    }

    // log(pi_k / (1 - pi_k)), infinite at the end points
    double prior_log_odds(std::size_t k) const {
        const double pi = st_.pi[k];
        if (pi >= 1.0) return std::numeric_limits<double>::infinity();
        if (pi <= 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(pi) - std::log1p(-pi);
    }

    ActivationConditional activation_from_products(double prior, double log_gs, double a, double b) const {
        const double ge = st_.gamma_eps;
        const double prec = std::max(st_.gamma_s + ge * a, kVarianceFloor);
        const double mean = ge * b / prec;
        double prob = prior > 0.0 ? 1.0 : 0.0;
        if (std::isfinite(prior)) {
            const double log_odds = prior + 0.5 * (log_gs - std::log(prec)) + 0.5 * mean * mean * prec;
            prob = 1.0 / (1.0 + std::exp(-log_odds));
        }
        return {prob, mean, prec};
    }

    // Likelihood contributions of patch i to the conditional of atom k, with
    // atom k's own term added back into the residual.
    void accumulate_atom_terms(std::size_t i, double w, const double* d, std::vector<double>& mean,
                               std::vector<double>& prec) const {
        const double ge = st_.gamma_eps;
        if (fully_observed(i)) {
            const double* r = residual_.data() + offsets_[i];
            double* m = mean.data();
            double* pr = prec.data();
            const double gww = ge * w * w;
            for (std::size_t p = 0; p < st_.patch_dim; ++p) {
                pr[p] += gww;
                m[p] += ge * w * (r[p] + d[p] * w);
            }
            return;
        }
        for (std::size_t j = offsets_[i]; j < offsets_[i + 1]; ++j) {
            const std::uint32_t p = index_[j];
            prec[p] += ge * w * w;
            mean[p] += ge * w * (residual_[j] + d[p] * w);
        }
    }

    // residual_i += scale * d_k on observed entries
    void add_to_residual(std::size_t i, std::size_t k, double scale) {
        const double* d = st_.dictionary.data() + k * st_.patch_dim;
        if (fully_observed(i)) {
            double* r = residual_.data() + offsets_[i];
            for (std::size_t p = 0; p < st_.patch_dim; ++p) r[p] += scale * d[p];
            return;
        }
        for (std::size_t j = offsets_[i]; j < offsets_[i + 1]; ++j) residual_[j] += scale * d[index_[j]];
    }

    void check_finite() const {
        const std::size_t sweep = st_.sweeps_done;
        for (double v : st_.dictionary)
            if (!std::isfinite(v)) throw NumericalError("non-finite dictionary entry", sweep);
        for (double v : st_.weights)
            if (!std::isfinite(v)) throw NumericalError("non-finite weight", sweep);
        for (double v : st_.pi)
            if (!(v >= 0.0 && v <= 1.0)) throw NumericalError("atom probability outside [0, 1]", sweep);
        if (!(std::isfinite(st_.gamma_s) && st_.gamma_s > 0.0))
            throw NumericalError("invalid weight precision", sweep);
        if (!(std::isfinite(st_.gamma_eps) && st_.gamma_eps > 0.0))
            throw NumericalError("invalid noise precision", sweep);
        for (double r : residual_)
            if (!std::isfinite(r)) throw NumericalError("non-finite residual", sweep);
    }

    BpfaHyperParams hp_;
    BpfaState st_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> index_;
    std::vector<double> residual_;
    std::vector<double> atom_sq_norm_;
};

inline BpfaState gibbs_sweep(BpfaState state, const PatchSet& patches, const BpfaHyperParams& hp) {
    BpfaSampler sampler(patches, hp, std::move(state));
    sampler.sweep();
    return std::move(sampler).release();
}

struct PatchParams {
    std::size_t patch_size = 8;
    std::size_t stride = 2;
    // Unset: keep measured values only for noiseless acquisitions.
    std::optional<bool> keep_measured;
};

struct SweepDiagnostics {
    std::size_t sweep = 0;
    double rmse_observed = 0.0;
    std::size_t active_atoms = 0;
    double gamma_eps = 0.0;
};

struct InpaintResult {
    MapImage map;
    BpfaState state;
    std::vector<SweepDiagnostics> diagnostics;
    PatchGeometry geometry;
    bool keep_measured = true;
};

using SweepCallback = std::function<void(const SweepDiagnostics&)>;

/// Per-channel mean of the observed values; zero for a channel with none.
inline std::vector<double> observed_channel_means(const PatchSet& patches) {
    const std::size_t C = patches.geometry.channels;
    std::vector<double> sum(C, 0.0);
    std::vector<std::size_t> n(C, 0);
    for (std::size_t j = 0; j < patches.values.size(); ++j) {
        if (!patches.observed[j]) continue;
        const std::size_t ch = (j % patches.dim) % C;
        sum[ch] += patches.values[j];
        ++n[ch];
    }
    for (std::size_t ch = 0; ch < C; ++ch) sum[ch] = n[ch] ? sum[ch] / static_cast<double>(n[ch]) : 0.0;
    return sum;
}

/// Patch extraction, burn-in, then posterior-mean patch estimates averaged
/// over `samples` retained sweeps and reassembled onto the map grid. The
/// sampler sees values centred on the per-channel observed mean, which is
/// added back to the estimates.
inline InpaintResult inpaint(const MaskedMap& masked, const PatchParams& pp, const BpfaHyperParams& hp,
                             const SweepCallback& on_sweep = {}) {
    hp.validate();
    PatchSet patches = extract_patches(masked, pp.patch_size, pp.stride);
    const std::size_t C = patches.geometry.channels;
    const std::vector<double> offset = observed_channel_means(patches);
    for (std::size_t j = 0; j < patches.values.size(); ++j) patches.values[j] -= offset[(j % patches.dim) % C];

    BpfaSampler sampler(patches, hp, init_state(patches, hp));
    if (sampler.observed_entries() == 0) throw DomainError("masked map has no observed pixels");

    std::vector<double> mean(patches.values.size(), 0.0);
    std::vector<SweepDiagnostics> diagnostics;
    const std::size_t total = hp.burn_in + hp.samples;
    diagnostics.reserve(total);
    for (std::size_t t = 0; t < total; ++t) {
        sampler.sweep();
        if (t >= hp.burn_in) sampler.accumulate_reconstruction(mean);
        SweepDiagnostics diag{t + 1, sampler.observed_rmse(), sampler.state().active_atom_count(),
                              sampler.state().gamma_eps};
        diagnostics.push_back(diag);
        if (on_sweep) on_sweep(diag);
    }
    const double inv = 1.0 / static_cast<double>(hp.samples);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = mean[j] * inv + offset[(j % patches.dim) % C];

    const bool keep = pp.keep_measured.value_or(masked.noise_sigma == 0.0);
    MapImage out = reassemble(mean, patches.geometry, masked, keep);
    return InpaintResult{std::move(out), std::move(sampler).release(), std::move(diagnostics),
                         patches.geometry, keep};
}

/// Dictionary dump: raw little-endian float64, atom after atom, plus a text
/// sidecar "<P> <K>" at `sidecar`.
inline void save_dictionary(const BpfaState& st, const std::filesystem::path& path,
                            const std::filesystem::path& sidecar) {
    std::vector<unsigned char> bytes(st.dictionary.size() * 8);
    for (std::size_t n = 0; n < st.dictionary.size(); ++n) {
        const auto bits = std::bit_cast<std::uint64_t>(st.dictionary[n]);
        for (std::size_t b = 0; b < 8; ++b) bytes[n * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    detail::write_atomically(path, [&](std::ostream& out) {
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    });
    detail::write_atomically(
        sidecar, [&](std::ostream& out) { out << st.patch_dim << ' ' << st.atoms << '\n'; }, false);
}

inline std::vector<double> load_dictionary(const std::filesystem::path& path,
                                           const std::filesystem::path& sidecar, std::size_t& patch_dim,
                                           std::size_t& atoms) {
    std::ifstream hdr(sidecar);
    if (!hdr) throw IoError(sidecar.string() + ": cannot open for reading");
    if (!(hdr >> patch_dim >> atoms)) throw FormatError(sidecar.string() + ": expected 'P K'");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    std::vector<unsigned char> bytes(patch_dim * atoms * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw IoError(path.string() + ": truncated");
    std::vector<double> out(patch_dim * atoms);
    for (std::size_t n = 0; n < out.size(); ++n) {
        std::uint64_t bits = 0;
        for (std::size_t b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[n * 8 + b]) << (8 * b);
        out[n] = std::bit_cast<double>(bits);
    }
    return out;
}

inline void write_diagnostics_csv(const std::vector<SweepDiagnostics>& rows,
                                  const std::filesystem::path& path) {
    detail::write_atomically(
        path,
        [&](std::ostream& out) {
            out << "sweep,rmse_observed,active_atoms,gamma_eps\n";
            char buf[128];
            for (const auto& r : rows) {
                std::snprintf(buf, sizeof buf, "%zu,%.9g,%zu,%.9g\n", r.sweep, r.rmse_observed,
                              r.active_atoms, r.gamma_eps);
                out << buf;
            }
        },
        false);
}

} // namespace ebsdcs

#endif
