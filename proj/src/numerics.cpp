#include "racedyn/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace racedyn {

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw Error("Rng::below: n must be positive");
    }
    // Smallest all-ones mask covering n - 1, then reject out-of-range draws.
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t draw = 0;
    do {
        draw = engine_() & mask;
    } while (draw >= n);
    return draw;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
    if (!(std >= 0.0)) {
        throw Error("gaussian_matrix: std must be non-negative");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = std * rng.normal();
        }
    }
    return m;
}

double wrap_angle(double radians) {
    double a = std::fmod(radians, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    // fmod of a tiny negative number can round up to exactly 2pi.
    if (a >= kTwoPi) {
        a = 0.0;
    }
    return a;
}

double angle_difference(double a, double b) {
    double d = std::remainder(a - b, kTwoPi);
    if (d <= -kPi) {
        d += kTwoPi;
    }
    return d;
}

double angle_2d(double x, double y) {
    if (x == 0.0 && y == 0.0) {
        throw DegenerateInput("angle_2d: zero vector has no angle");
    }
    return wrap_angle(std::atan2(y, x));
}

double angle_2d(const Eigen::Ref<const Vector>& v) {
    if (v.size() != 2) {
        throw DimensionMismatch("angle_2d: expected a 2-vector, got size " + std::to_string(v.size()));
    }
    return angle_2d(v[0], v[1]);
}

double cosine_similarity(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
    if (u.size() != v.size()) {
        throw DimensionMismatch("cosine_similarity: sizes " + std::to_string(u.size()) + " and " +
                                std::to_string(v.size()));
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        throw DegenerateInput("cosine_similarity: zero vector");
    }
    return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

double angular_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
    if (u.size() != v.size()) {
        throw DimensionMismatch("angular_distance: sizes " + std::to_string(u.size()) + " and " +
                                std::to_string(v.size()));
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        throw DegenerateInput("angular_distance: zero vector");
    }
    // Equal to arccos of the cosine similarity, but accurate near 0 and pi
    // where arccos loses half the significant digits.
    const Vector a = u / nu;
    const Vector b = v / nv;
    return 2.0 * std::atan2((a - b).norm(), (a + b).norm());
}

bool all_finite(const Eigen::Ref<const Vector>& v) {
    return v.allFinite();
}

bool all_finite(const Eigen::Ref<const Matrix>& m) {
    return m.allFinite();
}

void require_finite(const Eigen::Ref<const Matrix>& m, const std::string& what) {
    if (!m.allFinite()) {
        throw Error(what + ": non-finite entry");
    }
}

}  // namespace racedyn
