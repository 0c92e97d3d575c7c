#pragma once

#include <array>
#include <vector>

namespace tntk {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a);

// Four-vertex text region in image pixel coordinates (x right, y down),
// vertices clockwise on screen starting at the top-left-most corner, plus a
// confidence score in [0,1].
struct Quad {
    std::array<Vec2, 4> v{};
    double score = 0.0;

    // Signed shoelace area; positive for screen-clockwise vertex order.
    double signed_area() const;
    double area() const;  // absolute
    Vec2 centroid() const;

    // Strictly convex with consistent turning; excludes self-intersecting,
    // concave and collinear-vertex quads.
    bool convex() const;

    // Screen-clockwise order, starting at the vertex minimizing x+y
    // (ties: smaller y, then smaller x).
    Quad canonical() const;

    Quad translated(Vec2 d) const;
    Quad scaled(double s) const;

    // Vertices pulled toward the centroid: v' = c + keep*(v - c).
    Quad shrunk(double keep) const;
};

// Winding-agnostic point-in-convex-polygon test (boundary counts as inside).
bool point_in_convex(const Quad& q, Vec2 p);

// Sutherland-Hodgman: clip `subject` by convex `clip`, both any winding.
std::vector<Vec2> clip_convex(std::vector<Vec2> subject,
                              const std::vector<Vec2>& clip);

double polygon_area(const std::vector<Vec2>& poly);  // absolute shoelace

// Intersection-over-union of two convex quads via polygon clipping.
// Degenerate quads (area below 1e-12) give 0; concave or self-intersecting
// inputs are rejected with ValueError.
double polygon_iou(const Quad& a, const Quad& b);

// Greedy non-maximum suppression: sort by score descending (ties: smaller
// first-corner x, then y), keep a quad iff IoU with every kept quad <= thresh.
std::vector<Quad> nms_quads(const std::vector<Quad>& quads, double iou_thresh);

// 3x3 perspective transform with unit bottom-right element.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec2 apply(Vec2 p) const;
    double det() const;
    Homography inverse() const;  // throws ValueError when singular
};

// Direct linear transform with theta_33 fixed to 1: maps the destination
// rectangle corners (0,0), (wt-1,0), (wt-1,ht-1), (0,ht-1) onto the source
// quad corners, in order. Throws ValueError for degenerate quads.
Homography solve_homography(const Quad& src, int wt, int ht);

// Width rule for the RoI transform: aspect = mean(top,bottom)/mean(left,right)
// edge lengths, wt = clamp(round(ht*aspect), 1, wmax).
int roi_width(const Quad& src, int ht, int wmax);

// Minimum-area enclosing rectangle of a point set (rotating calipers over the
// convex hull), returned as a canonical quad.
Quad min_area_rect(const std::vector<Vec2>& pts);

}  // namespace tntk
