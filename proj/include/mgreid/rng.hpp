#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mgreid {

// splitmix64-based generator. Self-contained so streams are reproducible across
// platforms and standard-library versions (std distributions are not).
class Rng {
  public:
    explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ULL) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    // Box-Muller; one spare value cached.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return mean + stddev * r * std::cos(th);
    }

    // Independent child stream; used to give parallel sample generators
    // disjoint deterministic seeds.
    Rng child(uint64_t salt) {
        uint64_t s = state_ ^ (salt * 0xda942042e4dd58b5ULL + 0x2545f4914f6cdd1dULL);
        Rng r(s);
        r.next_u64();
        return r;
    }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (int i = static_cast<int>(xs.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(xs[i], xs[j]);
        }
    }

  private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mgreid
