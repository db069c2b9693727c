#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "flownet/errors.hpp"

namespace flownet {

// Deterministic RNG with named substreams. All draws are produced by our own
// transforms on top of mt19937_64 raw output, so a (seed, stream name) pair
// yields the same sequence on every platform and standard-library version.
// Every random quantity in the project descends from one root seed through
// child() calls; nothing reads the wall clock.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(mix_(seed)), engine_(seed_) {}

    // Derives an independent substream keyed by (this stream's seed, name).
    Rng child(std::string_view name) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        Rng out(0);
        out.seed_ = mix_(seed_ ^ mix_(h));
        out.engine_.seed(out.seed_);
        return out;
    }

    Rng child_indexed(std::string_view name, std::uint64_t index) const {
        Rng c = child(name);
        Rng out(0);
        out.seed_ = mix_(c.seed_ ^ mix_(index + 0x9e3779b97f4a7c15ULL));
        out.engine_.seed(out.seed_);
        return out;
    }

    std::uint64_t stream_seed() const { return seed_; }

    std::uint64_t raw() { return engine_(); }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1), safe for log().
    double uniform_pos() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via the polar method; caches the spare deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate = 1.0) { return -std::log(uniform_pos()) / rate; }

    // Gamma(shape, scale) by Marsaglia-Tsang; shape < 1 via boosting.
    double gamma(double shape, double scale = 1.0) {
        if (shape <= 0.0 || scale <= 0.0) throw NumericError("gamma draw requires positive shape and scale");
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    double chi_squared(double df) { return gamma(0.5 * df, 2.0); }

    double inverse_gamma(double shape, double rate) { return rate / gamma(shape, 1.0); }

    // Poisson by inversion for small means and Hormann's PTRS transformed
    // rejection for large ones.
    long long poisson(double mean) {
        if (!(mean >= 0.0) || !std::isfinite(mean)) throw NumericError("poisson draw requires a finite non-negative mean");
        if (mean == 0.0) return 0;
        if (mean < 10.0) {
            const double l = std::exp(-mean);
            long long k = 0;
            double p = uniform();
            while (p > l) {
                p *= uniform();
                ++k;
            }
            return k;
        }
        return poisson_ptrs_(mean);
    }

  private:
    static std::uint64_t mix_(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    long long poisson_ptrs_(double mean) {
        const double log_mean = std::log(mean);
        const double b = 0.931 + 2.53 * std::sqrt(mean);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform_pos();
            const double us = 0.5 - std::fabs(u);
            const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<long long>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <= kf * log_mean - mean - std::lgamma(kf + 1.0)) {
                return static_cast<long long>(kf);
            }
        }
    }

    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flownet
