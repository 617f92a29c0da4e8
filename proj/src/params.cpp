#include "parc/params.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace parc {

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t digest_params(const ParamStore& params,
                       const std::function<bool(const std::string&)>& pred) {
    uint64_t h = 14695981039346656037ull;
    for (const auto& [name, block] : params.blocks) {
        if (pred && !pred(name)) continue;
        h = fnv1a(name.data(), name.size(), h);
        for (int d : block.shape) {
            uint32_t u = static_cast<uint32_t>(d);
            h = fnv1a(&u, sizeof(u), h);
        }
        h = fnv1a(block.v.data(), block.v.size() * sizeof(double), h);
    }
    return h;
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (const auto& [name, g] : grads) {
        ParamBlock& block = params.at(name);
        if (!block.trainable)
            throw ValidationError("adam_step: gradient supplied for frozen block " + name);
        if (g.size() != block.count())
            throw ValidationError("adam_step: gradient size mismatch for " + name);

        AdamState::Moments& mom = state.moments[name];
        if (mom.m.empty()) {
            mom.m.assign(g.size(), 0.0);
            mom.v.assign(g.size(), 0.0);
        }
        for (size_t i = 0; i < g.size(); ++i) {
            mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g[i];
            mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = mom.m[i] / bc1;
            double vhat = mom.v[i] / bc2;
            block.v[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
            if (!std::isfinite(block.v[i]))
                throw NumericsError("adam_step: non-finite parameter in " + name);
        }
    }
}

GradCheckReport grad_check(const std::function<double(const ParamStore&)>& loss,
                           const ParamStore& params, const GradMap& analytic, double tolerance,
                           double h) {
    GradCheckReport report;
    report.tolerance = tolerance;
    ParamStore work = params;

    double loss_scale = 1e-12;  // running max |loss| seen, for the noise floor
    for (const auto& [name, g] : analytic) {
        const ParamBlock& block = params.at(name);
        if (g.size() != block.count())
            throw ValidationError("grad_check: gradient size mismatch for " + name);

        GradCheckBlock out;
        out.name = name;
        std::vector<double>& wv = work.at(name).v;
        for (size_t i = 0; i < g.size(); ++i) {
            double saved = wv[i];
            wv[i] = saved + h;
            double fp = loss(work);
            wv[i] = saved - h;
            double fm = loss(work);
            wv[i] = saved;
            loss_scale = std::max({loss_scale, std::fabs(fp), std::fabs(fm)});

            double fd = (fp - fm) / (2.0 * h);
            double abs_err = std::fabs(fd - g[i]);
            // Cancellation noise in the central difference itself.
            double noise = 8.0 * std::numeric_limits<double>::epsilon() * loss_scale / (2.0 * h);
            double denom = std::max({std::fabs(fd), std::fabs(g[i]), noise / tolerance, 1e-12});
            double rel = abs_err / denom;
            out.max_abs_err = std::max(out.max_abs_err, abs_err);
            out.max_rel_err = std::max(out.max_rel_err, rel);
            ++out.checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, out.max_rel_err);
        report.blocks.push_back(std::move(out));
    }
    return report;
}

}  // namespace parc
