#pragma once

// Small fully connected network mapping hidden variables to a point on the
// 4-outcome probability simplex. Samples are stored as columns so that a
// whole batch goes through one matrix product per layer.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trinet/error.hpp"

namespace trinet {

enum class Activation { Tanh, Softplus };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "softplus"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "softplus") return Activation::Softplus;
    throw ValidationError("unknown activation '" + s + "' (expected tanh or softplus)");
}

template <typename Scalar>
class ResponseNetwork {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;
    using VectorMap = Eigen::Map<Vector>;
    using ConstVectorMap = Eigen::Map<const Vector>;

    static constexpr int kOutputs = 4;

    /// Cached layer values of one forward pass.
    struct Workspace {
        std::vector<Matrix> activations;  ///< activations[0] is the input batch
        Matrix output;                    ///< kOutputs x batch, columns on the simplex
    };

    ResponseNetwork() = default;

    /// `widths` runs from the input width to the output width, which must be 4.
    ResponseNetwork(std::vector<int> widths, Activation activation)
        : widths_(std::move(widths)), activation_(activation) {
        if (widths_.size() < 2) throw ValidationError("network needs at least an input and an output layer");
        if (widths_.back() != kOutputs) throw ValidationError("network output width must be 4");
        for (int w : widths_) {
            if (w <= 0) throw ValidationError("layer widths must be positive");
        }
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            weight_offset_.push_back(offset);
            offset += static_cast<std::size_t>(widths_[l + 1]) * widths_[l];
            bias_offset_.push_back(offset);
            offset += widths_[l + 1];
        }
        params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
    }

    const std::vector<int>& widths() const { return widths_; }
    Activation activation() const { return activation_; }
    int input_width() const { return widths_.front(); }
    int layer_count() const { return static_cast<int>(widths_.size()) - 1; }
    Eigen::Index parameter_count() const { return params_.size(); }

    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    MatrixMap weight(int l) { return MatrixMap(params_.data() + weight_offset_[l], widths_[l + 1], widths_[l]); }
    ConstMatrixMap weight(int l) const {
        return ConstMatrixMap(params_.data() + weight_offset_[l], widths_[l + 1], widths_[l]);
    }
    VectorMap bias(int l) { return VectorMap(params_.data() + bias_offset_[l], widths_[l + 1]); }
    ConstVectorMap bias(int l) const { return ConstVectorMap(params_.data() + bias_offset_[l], widths_[l + 1]); }

    /// Normal initialization scaled by 1/sqrt(fan_in). First-layer weights are
    /// further multiplied by `input_scale` and each first-layer unit is centred
    /// on a uniform point of the unit cube; deeper biases start at zero.
    template <typename Rng>
    void initialize(Rng& rng, double input_scale = 1.0) {
        params_.setZero();
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int l = 0; l < layer_count(); ++l) {
            auto w = weight(l);
            const double scale = (l == 0 ? input_scale : 1.0) / std::sqrt(static_cast<double>(widths_[l]));
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(scale * normal(rng));
        }
        if (layer_count() > 1) {
            auto w = weight(0);
            auto b = bias(0);
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                double centre = 0.0;
                for (Eigen::Index j = 0; j < w.cols(); ++j) centre += static_cast<double>(w(i, j)) * unit(rng);
                b(i) = static_cast<Scalar>(-centre);
            }
        }
    }

    /// Forward pass over a batch (input_width x batch).
    void forward(const Matrix& input, Workspace& ws) const {
        if (input.rows() != input_width()) throw ValidationError("network input has the wrong width");
        const int layers = layer_count();
        ws.activations.resize(layers);
        ws.activations[0] = input;
        for (int l = 0; l < layers - 1; ++l) {
            Matrix z = weight(l) * ws.activations[l];
            z.colwise() += bias(l);
            apply_activation(z);
            ws.activations[l + 1] = std::move(z);
        }
        Matrix logits = weight(layers - 1) * ws.activations[layers - 1];
        logits.colwise() += bias(layers - 1);
        softmax_columns(logits);
        ws.output = std::move(logits);
    }

    Matrix evaluate(const Matrix& input) const {
        Workspace ws;
        forward(input, ws);
        return std::move(ws.output);
    }

    /// Accumulates dLoss/dparams into `grad` given dLoss/doutput.
    void backward(const Workspace& ws, const Matrix& grad_output, Vector& grad) const {
        const int layers = layer_count();
        // Softmax Jacobian: dz = p .* (g - <p, g>).
        const auto& p = ws.output;
        Matrix delta = p.cwiseProduct(grad_output);
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inner = delta.colwise().sum();
        delta -= p * inner.asDiagonal();
        for (int l = layers - 1; l >= 0; --l) {
            const Matrix& in = ws.activations[l];
            MatrixMap(grad.data() + weight_offset_[l], widths_[l + 1], widths_[l]).noalias() += delta * in.transpose();
            VectorMap(grad.data() + bias_offset_[l], widths_[l + 1]) += delta.rowwise().sum();
            if (l == 0) break;
            Matrix back = weight(l).transpose() * delta;
            back.array() *= activation_derivative(in).array();
            delta = std::move(back);
        }
    }

private:
    void apply_activation(Matrix& z) const {
        if (activation_ == Activation::Tanh) {
            // 1 - 2/(1 + e^{2z}) keeps the vectorized exp and saturates cleanly.
            z = (Scalar(1) - Scalar(2) / ((Scalar(2) * z.array()).exp() + Scalar(1))).matrix();
        } else {
            // log(1 + e^z) = max(z, 0) + log(1 + e^{-|z|})
            z = (z.array().max(Scalar(0)) + (-z.array().abs()).exp().log1p()).matrix();
        }
    }

    /// Derivative expressed through the activation output h.
    Matrix activation_derivative(const Matrix& h) const {
        if (activation_ == Activation::Tanh) return (Scalar(1) - h.array().square()).matrix();
        // softplus' = sigmoid(z) = 1 - e^{-h}
        return (Scalar(1) - (-h.array()).exp()).matrix();
    }

    static void softmax_columns(Matrix& z) {
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mx = z.colwise().maxCoeff();
        z.rowwise() -= mx;
        z = z.array().exp().matrix();
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> s = z.colwise().sum();
        z.array().rowwise() /= s.array();
    }

    std::vector<int> widths_;
    Activation activation_ = Activation::Tanh;
    std::vector<std::size_t> weight_offset_;
    std::vector<std::size_t> bias_offset_;
    Vector params_;
};

}  // namespace trinet
