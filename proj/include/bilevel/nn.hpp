#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "bilevel/rng.hpp"

namespace bilevel::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected tanh network with a linear output layer. All weights live
/// in one flat vector; samples are columns.
class Mlp {
public:
    Mlp() = default;
    /// sizes = {in, hidden..., out}. The output layer is scaled by out_gain.
    Mlp(std::vector<int> sizes, Rng& rng, double out_gain = 1.0);

    struct Cache {
        std::vector<Matrix> activations;  // activations[0] = input, back() = output
    };

    int input_dim() const noexcept { return sizes_.front(); }
    int output_dim() const noexcept { return sizes_.back(); }
    const std::vector<int>& sizes() const noexcept { return sizes_; }
    std::size_t num_params() const noexcept { return static_cast<std::size_t>(params_.size()); }

    Vector& params() noexcept { return params_; }
    const Vector& params() const noexcept { return params_; }

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, Cache& cache) const;
    /// Accumulates dLoss/dparams into grad (size num_params()) given dLoss/doutput.
    void backward(const Cache& cache, const Matrix& grad_out, Eigen::Ref<Vector> grad) const;

    /// Scales and shifts the output layer in place: y' = a*y + c (per output).
    void affine_output(double a, double c);

private:
    struct Layer {
        std::size_t w_offset, b_offset;
        int rows, cols;
    };
    Eigen::Map<const Matrix> weight(const Vector& p, const Layer& l) const {
        return {p.data() + l.w_offset, l.rows, l.cols};
    }

    std::vector<int> sizes_;
    std::vector<Layer> layers_;
    Vector params_;
};

/// Adam over a flat parameter vector.
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Vector::Zero(static_cast<Eigen::Index>(n))),
          v_(Vector::Zero(static_cast<Eigen::Index>(n))) {}

    /// Descent step: params -= lr * mhat / (sqrt(vhat) + eps).
    void step(Vector& params, const Vector& grad);
    double learning_rate() const noexcept { return lr_; }
    void set_learning_rate(double lr) noexcept { lr_ = lr; }

private:
    double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    Vector m_, v_;
};

}  // namespace bilevel::nn
