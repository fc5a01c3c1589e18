#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csformer/rng.hpp"

#include <cmath>
#include <numeric>
#include <vector>

using namespace csformer;

TEST_CASE("same seed and stream reproduce the sequence") {
    Rng a(42, "init");
    Rng b(42, "init");
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("different streams from one seed diverge") {
    Rng a(42, "init");
    Rng b(42, "shuffle");
    int equal = 0;
    for (int i = 0; i < 64; ++i) {
        if (a.next_u64() == b.next_u64()) ++equal;
    }
    CHECK(equal == 0);
}

TEST_CASE("uniform01 stays in [0,1) and fills the range") {
    Rng r(7, "u");
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = r.next_uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("symmetric uniform respects the half-width") {
    Rng r(7, "u");
    const double a = 0.25;
    for (int i = 0; i < 1000; ++i) {
        double u = r.next_uniform_sym(a);
        CHECK(u >= -a);
        CHECK(u <= a);
    }
}

TEST_CASE("normal samples have the right moments") {
    Rng r(123, "noise");
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = r.next_normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation and is deterministic") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;

    Rng a(9, "shuffle");
    Rng b(9, "shuffle");
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);

    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);
}

TEST_CASE("substream seeds differ per stream name") {
    CHECK(substream_seed(1, "init") != substream_seed(1, "shuffle"));
    CHECK(substream_seed(1, "init") != substream_seed(2, "init"));
    CHECK(substream_seed(1, "init") == substream_seed(1, "init"));
}
