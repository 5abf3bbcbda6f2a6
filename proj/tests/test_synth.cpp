#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <queue>
#include <set>

#include "sreg/bounds.hpp"
#include "sreg/metrics.hpp"
#include "sreg/synth.hpp"

using namespace sreg;

TEST_CASE("gen_base is deterministic and bounded") {
    const GridShape s({64, 64});
    const BaseScene a = gen_base(s, 7);
    const BaseScene b = gen_base(s, 7);
    CHECK(a.image.values == b.image.values);
    CHECK(a.labels.labels == b.labels.labels);
    REQUIRE(a.landmarks.size() == b.landmarks.size());
    for (size_t i = 0; i < a.landmarks.size(); ++i)
        for (int c = 0; c < 2; ++c)
            CHECK(a.landmarks.moving[i][c] == b.landmarks.moving[i][c]);

    const BaseScene other = gen_base(s, 8);
    CHECK(a.image.values != other.image.values);

    for (double v : a.image.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(a.landmarks.size() == 10);
}

TEST_CASE("gen_base labels are connected and non-overlapping") {
    const GridShape s({64, 64});
    for (uint64_t seed : {1ull, 5ull, 9ull}) {
        const BaseScene scene = gen_base(s, seed);
        std::set<uint16_t> ids;
        for (uint16_t v : scene.labels.labels)
            if (v)
                ids.insert(v);
        CHECK(ids.size() >= 4);
        CHECK(ids.size() <= 8);

        // BFS connectivity per label (4-connectivity).
        for (uint16_t id : ids) {
            const int64_t d1 = s.extent(1);
            int64_t start = -1, count = 0;
            for (int64_t v = 0; v < s.voxel_count(); ++v)
                if (scene.labels.at(v) == id) {
                    ++count;
                    if (start < 0)
                        start = v;
                }
            std::queue<int64_t> frontier;
            std::set<int64_t> seen{start};
            frontier.push(start);
            while (!frontier.empty()) {
                const int64_t v = frontier.front();
                frontier.pop();
                const int64_t i = v / d1, j = v % d1;
                const std::array<std::pair<int64_t, int64_t>, 4> nbrs{
                    {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}}};
                for (const auto& [y, x] : nbrs) {
                    if (y < 0 || y >= s.extent(0) || x < 0 || x >= d1)
                        continue;
                    const int64_t w = y * d1 + x;
                    if (scene.labels.at(w) == id && !seen.count(w)) {
                        seen.insert(w);
                        frontier.push(w);
                    }
                }
            }
            CHECK(static_cast<int64_t>(seen.size()) == count);
        }
    }
}

TEST_CASE("gen_deformation hits the requested magnitude and stays fold-free") {
    const GridShape s({64, 64});
    const DisplacementField f = gen_deformation(s, 2.0, 8.0, 3);
    double max_m2 = 0.0;
    for (int64_t v = 0; v < s.voxel_count(); ++v) {
        double m2 = 0.0;
        for (int c = 0; c < 2; ++c)
            m2 += f.comp(c, v) * f.comp(c, v);
        max_m2 = std::max(max_m2, m2);
    }
    CHECK(std::sqrt(max_m2) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(folding_metrics(f).fv == 0.0);

    // The beta heuristic on such samples reproduces 0.15 x magnitude.
    const std::array<DisplacementField, 1> samples{f};
    CHECK(estimate_alpha_beta(samples, DisplacementKind::kAbsolute).beta ==
          doctest::Approx(0.3).epsilon(1e-9));

    CHECK_THROWS_AS(gen_deformation(s, 0.0, 8.0, 3), ValueError);
    CHECK_THROWS_AS(gen_deformation(s, 1.0, 0.5, 3), ValueError);
}

TEST_CASE("make_pair transports landmarks exactly through the true field") {
    const GridShape s({64, 64});
    const SyntheticPair pair = make_pair(s, 2.0, 8.0, 11);

    CHECK(pair.moving.values != pair.fixed.values);

    // q_f + u(q_f) = q_m at every landmark.
    for (size_t i = 0; i < pair.landmarks.size(); ++i) {
        const Vec& qf = pair.landmarks.fixed[i];
        const Vec& qm = pair.landmarks.moving[i];
        const std::array<double, 2> p{qf[0], qf[1]};
        const Vec u = sample_linear(pair.true_field, p);
        for (int c = 0; c < 2; ++c)
            CHECK(qf[c] + u[c] == doctest::Approx(qm[c]).epsilon(1e-9));
    }

    // The true field aligns the labels nearly perfectly.
    const LabelVolume warped = warp_labels(pair.moving_labels, pair.true_field);
    CHECK(dice(warped, pair.fixed_labels) > 0.95);

    // Fixed = moving warped by the truth (definitionally bit-equal here).
    const ImageVolume rewarped = warp_image(pair.moving, pair.true_field);
    CHECK(rewarped.values == pair.fixed.values);

    CHECK_THROWS_AS(make_pair(s, 0.0, 8.0, 11), ValueError);
}

TEST_CASE("make_pair works on small 3-D grids") {
    const GridShape s({12, 12, 12});
    const SyntheticPair pair = make_pair(s, 1.0, 3.0, 21);
    CHECK(folding_metrics(pair.true_field).fv == 0.0);
    CHECK(pair.moving.shape == s);
    CHECK(pair.landmarks.size() == 10);
}
