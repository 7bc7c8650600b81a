#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eml {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Input has the wrong shape for the operation (rows/cols disagree).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input violates a value constraint (negative weight, non-finite entry, bad config).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical step could not be carried out (singular system, non-finite objective).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Triplet sampling cannot satisfy the class constraints of a batch.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed dataset text.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Half-open column interval [begin, begin + size).
struct ColumnRange {
    Eigen::Index begin = 0;
    Eigen::Index size = 0;

    [[nodiscard]] Eigen::Index end() const { return begin + size; }
    [[nodiscard]] bool empty() const { return size == 0; }

    friend bool operator==(const ColumnRange&, const ColumnRange&) = default;
};

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace eml
