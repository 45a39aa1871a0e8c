#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace racedyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Outgoing-weight angle of a neuron that pushes output 1 up and output 2 down.
inline constexpr double kClass1Angle = 7.0 * kPi / 4.0;
/// Mirror image of kClass1Angle.
inline constexpr double kClass2Angle = 3.0 * kPi / 4.0;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A quantity is undefined for the given input (zero vector, empty set, ...).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Seeded random stream.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are not portable, so the uniform,
/// normal and bounded-integer transforms are implemented here:
///   uniform()  = (raw >> 11) * 2^-53, in [0, 1)
///   normal()   = Marsaglia polar method, spare value cached
///   below(n)   = rejection sampling on the top bits, unbiased
/// Two Rng objects constructed from the same seed produce identical streams
/// on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double normal();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by Rng::below.
template <typename Container>
void shuffle(Container& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

/// rows x cols matrix with i.i.d. Normal(0, std^2) entries, drawn row-major.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng);

/// Planar angle of a 2-vector measured from (1, 0), in [0, 2pi).
double angle_2d(const Eigen::Ref<const Vector>& v);
double angle_2d(double x, double y);

/// Wraps an angle into [0, 2pi).
double wrap_angle(double radians);
/// Shortest signed difference a - b, in (-pi, pi].
double angle_difference(double a, double b);

/// u.v / (|u||v|). Throws DegenerateInput on zero vectors.
double cosine_similarity(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);

/// arccos of the clamped cosine similarity, in [0, pi].
double angular_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);

bool all_finite(const Eigen::Ref<const Vector>& v);
bool all_finite(const Eigen::Ref<const Matrix>& m);

/// Throws Error naming `what` when any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Matrix>& m, const std::string& what);

}  // namespace racedyn
