#include "bilevel/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace bilevel::nn {

Mlp::Mlp(std::vector<int> sizes, Rng& rng, double out_gain) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        Layer layer{};
        layer.rows = sizes_[l + 1];
        layer.cols = sizes_[l];
        layer.w_offset = total;
        total += static_cast<std::size_t>(layer.rows) * static_cast<std::size_t>(layer.cols);
        layer.b_offset = total;
        total += static_cast<std::size_t>(layer.rows);
        layers_.push_back(layer);
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(total));
    // Glorot-uniform hidden layers, shrunken output layer, zero biases.
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        double limit = std::sqrt(6.0 / static_cast<double>(layer.rows + std::max(layer.cols, 1)));
        if (l + 1 == layers_.size()) limit *= out_gain;
        std::uniform_real_distribution<double> u(-limit, limit);
        for (int i = 0; i < layer.rows * layer.cols; ++i) params_[static_cast<Eigen::Index>(layer.w_offset) + i] = u(rng);
    }
}

Matrix Mlp::forward(const Matrix& x) const {
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        Eigen::Map<const Vector> b(params_.data() + layer.b_offset, layer.rows);
        Matrix z = weight(params_, layer) * h;
        z.colwise() += b;
        if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
        h = std::move(z);
    }
    return h;
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
    cache.activations.clear();
    cache.activations.reserve(layers_.size() + 1);
    cache.activations.push_back(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        Eigen::Map<const Vector> b(params_.data() + layer.b_offset, layer.rows);
        Matrix z = weight(params_, layer) * cache.activations.back();
        z.colwise() += b;
        if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
        cache.activations.push_back(std::move(z));
    }
    return cache.activations.back();
}

void Mlp::backward(const Cache& cache, const Matrix& grad_out, Eigen::Ref<Vector> grad) const {
    Matrix delta = grad_out;  // dL/dz of the current layer
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& layer = layers_[li];
        const Matrix& input = cache.activations[li];
        Eigen::Map<Matrix> gw(grad.data() + layer.w_offset, layer.rows, layer.cols);
        Eigen::Map<Vector> gb(grad.data() + layer.b_offset, layer.rows);
        gw.noalias() += delta * input.transpose();
        gb.noalias() += delta.rowwise().sum();
        if (li == 0) break;
        Matrix back = weight(params_, layer).transpose() * delta;
        // tanh'(z) = 1 - tanh(z)^2, and input is tanh(z) of the layer below.
        delta = (back.array() * (1.0 - input.array().square())).matrix();
    }
}

void Mlp::affine_output(double a, double c) {
    const auto& layer = layers_.back();
    Eigen::Map<Vector> w(params_.data() + layer.w_offset, static_cast<Eigen::Index>(layer.rows) * layer.cols);
    Eigen::Map<Vector> b(params_.data() + layer.b_offset, layer.rows);
    w *= a;
    b = (b.array() * a + c).matrix();
}

void Adam::step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace bilevel::nn
