#include "mre/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include "mre/error.hpp"

namespace mre::nn {

double CosineWarmRestarts::lr() const {
    const double phase = std::numbers::pi * static_cast<double>(t_cur_) / static_cast<double>(t_i_);
    return eta_min_ + (base_lr_ - eta_min_) * (1.0 + std::cos(phase)) / 2.0;
}

void CosineWarmRestarts::epoch_step() {
    ++t_cur_;
    if (t_cur_ >= t_i_) {
        t_cur_ = 0;
        t_i_ = std::max(1, static_cast<int>(std::lround(t_i_ * t_mult_)));
    }
}

Adam::Adam(std::string name, ParamGroup params, AdamConfig cfg)
    : name_(std::move(name)), params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto* p : params_) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step(double lr_scale) {
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
    const double lr = cfg_.lr * lr_scale;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
        v_[i] = cfg_.beta2 * v_[i].array().matrix() +
                (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
        const Mat mhat = m_[i] / bias1;
        const Mat vhat = v_[i] / bias2;
        p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
}

void Adam::clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto* p : params_) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto* p : params_) p->grad *= s;
    }
}

std::vector<std::pair<std::string, const Mat*>> Adam::state() const {
    std::vector<std::pair<std::string, const Mat*>> out;
    out.reserve(2 * params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back(name_ + ".m/" + params_[i]->name, &m_[i]);
        out.emplace_back(name_ + ".v/" + params_[i]->name, &v_[i]);
    }
    return out;
}

void Adam::restore_moment(const std::string& key, const Mat& value) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (key == name_ + ".m/" + params_[i]->name) {
            if (value.rows() != m_[i].rows() || value.cols() != m_[i].cols())
                throw CorruptCheckpoint("moment shape mismatch for " + key);
            m_[i] = value;
            return;
        }
        if (key == name_ + ".v/" + params_[i]->name) {
            if (value.rows() != v_[i].rows() || value.cols() != v_[i].cols())
                throw CorruptCheckpoint("moment shape mismatch for " + key);
            v_[i] = value;
            return;
        }
    }
    throw CorruptCheckpoint("unknown optimizer moment: " + key);
}

}  // namespace mre::nn
