#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "tntk/geometry.hpp"

using namespace tntk;

namespace {

Quad rect(double x0, double y0, double x1, double y1, double score = 0.0) {
    Quad q;
    q.v = {Vec2{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    q.score = score;
    return q;
}

Quad random_convex_quad(Rng& rng, double lo = 0.0, double hi = 100.0) {
    for (;;) {
        const double cx = rng.uniform(lo + 15, hi - 15);
        const double cy = rng.uniform(lo + 15, hi - 15);
        const double w = rng.uniform(4.0, 14.0);
        const double h = rng.uniform(3.0, 10.0);
        const double ang = rng.uniform(-1.5, 1.5);
        const double ca = std::cos(ang), sa = std::sin(ang);
        Quad q = rect(-w, -h, w, h);
        for (auto& p : q.v) {
            p.x += rng.uniform(-0.2, 0.2) * w;
            p.y += rng.uniform(-0.2, 0.2) * h;
            p = Vec2{ca * p.x - sa * p.y + cx, sa * p.x + ca * p.y + cy};
        }
        if (q.convex()) return q;
    }
}

// Monte-Carlo IoU oracle over the joint bounding box.
double iou_monte_carlo(const Quad& a, const Quad& b, Rng& rng, int samples) {
    double lox = 1e30, loy = 1e30, hix = -1e30, hiy = -1e30;
    for (const Quad* q : {&a, &b})
        for (const Vec2& p : q->v) {
            lox = std::min(lox, p.x);
            loy = std::min(loy, p.y);
            hix = std::max(hix, p.x);
            hiy = std::max(hiy, p.y);
        }
    int ni = 0, nu = 0;
    for (int s = 0; s < samples; ++s) {
        const Vec2 p{rng.uniform(lox, hix), rng.uniform(loy, hiy)};
        const bool ina = point_in_convex(a, p);
        const bool inb = point_in_convex(b, p);
        ni += (ina && inb);
        nu += (ina || inb);
    }
    return nu == 0 ? 0.0 : static_cast<double>(ni) / nu;
}

// O(n^2) reference NMS.
std::vector<Quad> nms_bruteforce(std::vector<Quad> quads, double thresh) {
    std::stable_sort(quads.begin(), quads.end(), [](const Quad& a, const Quad& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.v[0].x != b.v[0].x) return a.v[0].x < b.v[0].x;
        return a.v[0].y < b.v[0].y;
    });
    std::vector<bool> dead(quads.size(), false);
    std::vector<Quad> kept;
    for (std::size_t i = 0; i < quads.size(); ++i) {
        if (dead[i]) continue;
        kept.push_back(quads[i]);
        for (std::size_t j = i + 1; j < quads.size(); ++j)
            if (!dead[j] && polygon_iou(quads[i], quads[j]) > thresh) dead[j] = true;
    }
    return kept;
}

}  // namespace

TEST_CASE("polygon_iou: identical quads give 1, disjoint give 0") {
    Rng rng(101);
    for (int i = 0; i < 20; ++i) {
        const Quad q = random_convex_quad(rng);
        CHECK(polygon_iou(q, q) == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(polygon_iou(rect(0, 0, 1, 1), rect(5, 5, 6, 6)) == 0.0);
}

TEST_CASE("polygon_iou: unit squares offset by half overlap 1/3") {
    const double iou = polygon_iou(rect(0, 0, 1, 1), rect(0.5, 0, 1.5, 1));
    CHECK(iou == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("polygon_iou: symmetric and translation invariant") {
    Rng rng(103);
    for (int i = 0; i < 50; ++i) {
        const Quad a = random_convex_quad(rng);
        const Quad b = random_convex_quad(rng);
        const double ab = polygon_iou(a, b);
        const double ba = polygon_iou(b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        const Vec2 d{rng.uniform(-40, 40), rng.uniform(-40, 40)};
        const double shifted = polygon_iou(a.translated(d), b.translated(d));
        CHECK(shifted == doctest::Approx(ab).epsilon(1e-9));
    }
}

TEST_CASE("polygon_iou: agrees with a Monte-Carlo oracle") {
    Rng rng(107);
    int checked = 0;
    while (checked < 12) {
        Quad a = random_convex_quad(rng, 0, 40);
        Quad b = random_convex_quad(rng, 0, 40);
        const double iou = polygon_iou(a, b);
        if (iou < 0.02) continue;  // MC too noisy near zero overlap
        Rng mc(1000 + static_cast<std::uint64_t>(checked));
        const double est = iou_monte_carlo(a, b, mc, 200000);
        CHECK(iou == doctest::Approx(est).epsilon(0.03));
        ++checked;
    }
}

TEST_CASE("polygon_iou: degenerate gives 0, concave rejected") {
    Quad flat = rect(0, 0, 5, 0);  // zero height
    CHECK(polygon_iou(flat, rect(0, 0, 1, 1)) == 0.0);
    Quad concave;
    concave.v = {Vec2{0, 0}, {4, 0}, {1, 1}, {4, 4}};
    CHECK_THROWS_AS(polygon_iou(concave, rect(0, 0, 1, 1)), ValueError);
}

TEST_CASE("quad: canonical order is clockwise from the top-left-most corner") {
    Quad q;
    q.v = {Vec2{4, 0}, {4, 3}, {0, 3}, {0, 0}};  // counterclockwise on screen
    const Quad c = q.canonical();
    CHECK(c.v[0].x == 0.0);
    CHECK(c.v[0].y == 0.0);
    CHECK(c.v[1].x == 4.0);
    CHECK(c.v[1].y == 0.0);
    CHECK(c.signed_area() > 0.0);
}

TEST_CASE("nms: single quad survives; duplicate keeps the higher score") {
    const Quad a = rect(0, 0, 10, 5, 0.9);
    Quad b = a;
    b.score = 0.8;
    auto kept = nms_quads({b, a}, 0.2);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
    auto single = nms_quads({a}, 0.2);
    CHECK(single.size() == 1);
}

TEST_CASE("nms: matches the brute-force reference on random sets") {
    Rng rng(109);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<Quad> quads;
        const int n = 3 + static_cast<int>(rng.below(48));
        for (int i = 0; i < n; ++i) {
            Quad q = random_convex_quad(rng, 0, 60);
            q.score = rng.uniform(0.01, 1.0);
            quads.push_back(q);
        }
        const double thresh = rng.uniform(0.1, 0.5);
        const auto fast = nms_quads(quads, thresh);
        const auto slow = nms_bruteforce(quads, thresh);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(fast[i].score == slow[i].score);
            for (int k = 0; k < 4; ++k) {
                CHECK(fast[i].v[static_cast<std::size_t>(k)].x ==
                      slow[i].v[static_cast<std::size_t>(k)].x);
                CHECK(fast[i].v[static_cast<std::size_t>(k)].y ==
                      slow[i].v[static_cast<std::size_t>(k)].y);
            }
        }
        // kept-set invariants
        for (std::size_t i = 0; i < fast.size(); ++i) {
            if (i) CHECK(fast[i].score <= fast[i - 1].score);
            for (std::size_t j = i + 1; j < fast.size(); ++j)
                CHECK(polygon_iou(fast[i], fast[j]) <= thresh);
        }
    }
}

TEST_CASE("solve_homography: the destination rectangle itself gives identity") {
    const Quad q = rect(0, 0, 7, 3);
    const Homography h = solve_homography(q, 8, 4);
    for (int i = 0; i < 9; ++i) {
        const double expect = (i % 4 == 0) ? 1.0 : 0.0;
        CHECK(h.m[static_cast<std::size_t>(i)] ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("solve_homography: translated rectangle gives pure translation") {
    const Quad q = rect(5, 7, 12, 10);
    const Homography h = solve_homography(q, 8, 4);
    CHECK(h.m[0] == doctest::Approx(1.0));
    CHECK(h.m[1] == doctest::Approx(0.0));
    CHECK(h.m[2] == doctest::Approx(5.0));
    CHECK(h.m[3] == doctest::Approx(0.0));
    CHECK(h.m[4] == doctest::Approx(1.0));
    CHECK(h.m[5] == doctest::Approx(7.0));
    CHECK(h.m[6] == doctest::Approx(0.0));
    CHECK(h.m[7] == doctest::Approx(0.0));
}

TEST_CASE("solve_homography: corner mapping self-check on random quads") {
    Rng rng(113);
    for (int trial = 0; trial < 1000; ++trial) {
        const Quad q = random_convex_quad(rng);
        const int ht = 8;
        const int wt = roi_width(q, ht, 64);
        if (wt < 2) continue;
        const Homography h = solve_homography(q, wt, ht);
        const Vec2 dst[4] = {{0, 0},
                             {static_cast<double>(wt - 1), 0},
                             {static_cast<double>(wt - 1), static_cast<double>(ht - 1)},
                             {0, static_cast<double>(ht - 1)}};
        const Homography inv = h.inverse();
        for (int k = 0; k < 4; ++k) {
            const Vec2 mapped = h.apply(dst[k]);
            CHECK(std::abs(mapped.x - q.v[static_cast<std::size_t>(k)].x) < 1e-6);
            CHECK(std::abs(mapped.y - q.v[static_cast<std::size_t>(k)].y) < 1e-6);
            const Vec2 back = inv.apply(q.v[static_cast<std::size_t>(k)]);
            CHECK(std::abs(back.x - dst[k].x) < 1e-6);
            CHECK(std::abs(back.y - dst[k].y) < 1e-6);
        }
    }
}

TEST_CASE("solve_homography: collinear corners are rejected") {
    Quad q;
    q.v = {Vec2{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    CHECK_THROWS_AS(solve_homography(q, 8, 4), ValueError);
}

TEST_CASE("roi_width: aspect rule with clamping") {
    CHECK(roi_width(rect(0, 0, 10, 10), 8, 64) == 8);
    CHECK(roi_width(rect(0, 0, 40, 10), 8, 64) == 32);
    CHECK(roi_width(rect(0, 0, 1000, 10), 8, 64) == 64);
    CHECK(roi_width(rect(0, 0, 1, 50), 8, 64) == 1);
}

TEST_CASE("min_area_rect: recovers a rotated rectangle") {
    Rng rng(127);
    for (int trial = 0; trial < 10; ++trial) {
        const double ang = rng.uniform(-1.2, 1.2);
        const double ca = std::cos(ang), sa = std::sin(ang);
        const double w = rng.uniform(4, 20), h = rng.uniform(2, 10);
        std::vector<Vec2> pts;
        for (const Vec2 base : {Vec2{0, 0}, {w, 0}, {w, h}, {0, h}, {w / 2, h / 2}})
            pts.push_back({ca * base.x - sa * base.y + 30, sa * base.x + ca * base.y + 30});
        const Quad r = min_area_rect(pts);
        CHECK(r.area() == doctest::Approx(w * h).epsilon(1e-6));
        for (const Vec2& p : pts) CHECK(point_in_convex(r, p));
    }
}
