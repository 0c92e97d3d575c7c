#include "tntk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tntk/error.hpp"

namespace tntk {

namespace {
constexpr double kDegenerateArea = 1e-12;
}

double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

double Quad::signed_area() const {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec2& p = v[static_cast<std::size_t>(i)];
        const Vec2& q = v[static_cast<std::size_t>((i + 1) % 4)];
        s += p.x * q.y - q.x * p.y;
    }
    return 0.5 * s;
}

double Quad::area() const { return std::abs(signed_area()); }

Vec2 Quad::centroid() const {
    return {0.25 * (v[0].x + v[1].x + v[2].x + v[3].x),
            0.25 * (v[0].y + v[1].y + v[2].y + v[3].y)};
}

bool Quad::convex() const {
    int sign = 0;
    for (int i = 0; i < 4; ++i) {
        const Vec2 a = v[static_cast<std::size_t>((i + 1) % 4)] -
                       v[static_cast<std::size_t>(i)];
        const Vec2 b = v[static_cast<std::size_t>((i + 2) % 4)] -
                       v[static_cast<std::size_t>((i + 1) % 4)];
        const double c = cross(a, b);
        if (std::abs(c) < kDegenerateArea) return false;
        const int s = c > 0 ? 1 : -1;
        if (sign == 0)
            sign = s;
        else if (s != sign)
            return false;
    }
    return true;
}

Quad Quad::canonical() const {
    Quad q = *this;
    if (q.signed_area() < 0.0) std::swap(q.v[1], q.v[3]);
    int best = 0;
    for (int i = 1; i < 4; ++i) {
        const Vec2& a = q.v[static_cast<std::size_t>(i)];
        const Vec2& b = q.v[static_cast<std::size_t>(best)];
        const double sa = a.x + a.y, sb = b.x + b.y;
        if (sa < sb || (sa == sb && (a.y < b.y || (a.y == b.y && a.x < b.x))))
            best = i;
    }
    Quad out = q;
    for (int i = 0; i < 4; ++i)
        out.v[static_cast<std::size_t>(i)] = q.v[static_cast<std::size_t>((i + best) % 4)];
    return out;
}

Quad Quad::translated(Vec2 d) const {
    Quad q = *this;
    for (auto& p : q.v) p = p + d;
    return q;
}

Quad Quad::scaled(double s) const {
    Quad q = *this;
    for (auto& p : q.v) p = s * p;
    return q;
}

Quad Quad::shrunk(double keep) const {
    const Vec2 c = centroid();
    Quad q = *this;
    for (auto& p : q.v) p = c + keep * (p - c);
    return q;
}

bool point_in_convex(const Quad& q, Vec2 p) {
    const double orient = q.signed_area() >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < 4; ++i) {
        const Vec2& a = q.v[static_cast<std::size_t>(i)];
        const Vec2& b = q.v[static_cast<std::size_t>((i + 1) % 4)];
        if (orient * cross(b - a, p - a) < -1e-9) return false;
    }
    return true;
}

double polygon_area(const std::vector<Vec2>& poly) {
    if (poly.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        s += p.x * q.y - q.x * p.y;
    }
    return std::abs(0.5 * s);
}

std::vector<Vec2> clip_convex(std::vector<Vec2> subject,
                              const std::vector<Vec2>& clip) {
    if (clip.size() < 3) return {};
    // orient the clip polygon so that "inside" is the cross >= 0 side
    double s = 0.0;
    for (std::size_t i = 0; i < clip.size(); ++i) {
        const Vec2& p = clip[i];
        const Vec2& q = clip[(i + 1) % clip.size()];
        s += p.x * q.y - q.x * p.y;
    }
    std::vector<Vec2> clipped = clip;
    if (s < 0.0) std::reverse(clipped.begin(), clipped.end());

    std::vector<Vec2> out = std::move(subject);
    for (std::size_t e = 0; e < clipped.size() && !out.empty(); ++e) {
        const Vec2 a = clipped[e];
        const Vec2 b = clipped[(e + 1) % clipped.size()];
        const Vec2 dir = b - a;
        std::vector<Vec2> in = std::move(out);
        out.clear();
        for (std::size_t i = 0; i < in.size(); ++i) {
            const Vec2 p = in[i];
            const Vec2 q = in[(i + 1) % in.size()];
            const double dp = cross(dir, p - a);
            const double dq = cross(dir, q - a);
            if (dp >= 0.0) out.push_back(p);
            if ((dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0)) {
                const double t = dp / (dp - dq);
                out.push_back(p + t * (q - p));
            }
        }
    }
    return out;
}

double polygon_iou(const Quad& a, const Quad& b) {
    const double aa = a.area();
    const double ab = b.area();
    if (aa < kDegenerateArea || ab < kDegenerateArea) return 0.0;
    if (!a.convex() || !b.convex())
        throw ValueError("polygon_iou: concave or self-intersecting quad");
    const std::vector<Vec2> sa(a.v.begin(), a.v.end());
    const std::vector<Vec2> sb(b.v.begin(), b.v.end());
    const double inter = polygon_area(clip_convex(sa, sb));
    const double uni = aa + ab - inter;
    if (uni <= kDegenerateArea) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Quad> nms_quads(const std::vector<Quad>& quads, double iou_thresh) {
    std::vector<Quad> sorted = quads;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Quad& a, const Quad& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.v[0].x != b.v[0].x) return a.v[0].x < b.v[0].x;
        return a.v[0].y < b.v[0].y;
    });
    std::vector<Quad> kept;
    for (const Quad& q : sorted) {
        bool keep = true;
        for (const Quad& k : kept) {
            if (polygon_iou(q, k) > iou_thresh) {
                keep = false;
                break;
            }
        }
        if (keep) kept.push_back(q);
    }
    return kept;
}

Vec2 Homography::apply(Vec2 p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    if (std::abs(w) < 1e-12)
        throw ValueError("homography: point maps to infinity");
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w,
            (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

double Homography::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const double d = det();
    if (std::abs(d) < 1e-12) throw ValueError("homography: singular matrix");
    const double inv = 1.0 / d;
    Homography r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
    if (std::abs(r.m[8]) > 1e-12) {
        const double s = 1.0 / r.m[8];
        for (double& e : r.m) e *= s;
    }
    return r;
}

Homography solve_homography(const Quad& src, int wt, int ht) {
    if (wt < 1 || ht < 1)
        throw ValueError("solve_homography: target dims must be >= 1");
    const double w = static_cast<double>(wt - 1);
    const double h = static_cast<double>(ht - 1);
    const Vec2 dst[4] = {{0, 0}, {w, 0}, {w, h}, {0, h}};

    // Rows: theta maps destination corner k to source corner k.
    double a[8][9];
    for (int k = 0; k < 4; ++k) {
        const double xd = dst[k].x, yd = dst[k].y;
        const double xs = src.v[static_cast<std::size_t>(k)].x;
        const double ys = src.v[static_cast<std::size_t>(k)].y;
        double* r0 = a[2 * k];
        double* r1 = a[2 * k + 1];
        r0[0] = xd;  r0[1] = yd;  r0[2] = 1;  r0[3] = 0;  r0[4] = 0;  r0[5] = 0;
        r0[6] = -xs * xd;  r0[7] = -xs * yd;  r0[8] = xs;
        r1[0] = 0;   r1[1] = 0;   r1[2] = 0;  r1[3] = xd; r1[4] = yd; r1[5] = 1;
        r1[6] = -ys * xd;  r1[7] = -ys * yd;  r1[8] = ys;
    }

    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12)
            throw ValueError("solve_homography: degenerate quad (singular system)");
        if (piv != col)
            for (int c = 0; c < 9; ++c) std::swap(a[piv][c], a[col][c]);
        const double inv = 1.0 / a[col][col];
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = a[r][col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
        }
    }

    Homography t;
    for (int i = 0; i < 8; ++i) t.m[static_cast<std::size_t>(i)] = a[i][8] / a[i][i];
    t.m[8] = 1.0;
    if (std::abs(t.det()) < 1e-12)
        throw ValueError("solve_homography: degenerate quad (non-invertible)");
    return t;
}

int roi_width(const Quad& src, int ht, int wmax) {
    const double top = norm(src.v[1] - src.v[0]);
    const double bottom = norm(src.v[2] - src.v[3]);
    const double left = norm(src.v[3] - src.v[0]);
    const double right = norm(src.v[2] - src.v[1]);
    const double denom = left + right;
    if (denom < 1e-12) throw ValueError("roi_width: degenerate quad");
    const double aspect = (top + bottom) / denom;
    const long w = std::lround(static_cast<double>(ht) * aspect);
    return static_cast<int>(std::clamp(w, 1L, static_cast<long>(wmax)));
}

namespace {

// Andrew monotone chain; returns hull in counterclockwise (math) order.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Vec2> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
            --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
            --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

}  // namespace

Quad min_area_rect(const std::vector<Vec2>& pts) {
    if (pts.size() < 3) throw ValueError("min_area_rect: need at least 3 points");
    const std::vector<Vec2> hull = convex_hull(pts);
    if (hull.size() < 3) throw ValueError("min_area_rect: collinear points");
    double best_area = std::numeric_limits<double>::infinity();
    Quad best;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
        const double len = norm(e);
        if (len < 1e-12) continue;
        const Vec2 u{e.x / len, e.y / len};
        const Vec2 v{-u.y, u.x};
        double lo_u = std::numeric_limits<double>::infinity(), hi_u = -lo_u;
        double lo_v = lo_u, hi_v = -lo_u;
        for (const Vec2& p : hull) {
            const double pu = dot(p, u), pv = dot(p, v);
            lo_u = std::min(lo_u, pu);
            hi_u = std::max(hi_u, pu);
            lo_v = std::min(lo_v, pv);
            hi_v = std::max(hi_v, pv);
        }
        const double area = (hi_u - lo_u) * (hi_v - lo_v);
        if (area < best_area) {
            best_area = area;
            best.v[0] = lo_u * u + lo_v * v;
            best.v[1] = hi_u * u + lo_v * v;
            best.v[2] = hi_u * u + hi_v * v;
            best.v[3] = lo_u * u + hi_v * v;
        }
    }
    return best.canonical();
}

}  // namespace tntk
