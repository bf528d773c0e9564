#pragma once

#include <string>
#include <vector>

#include "mre/nn/parameter.hpp"

namespace mre::nn {

// Cosine annealing with warm restarts, stepped once per epoch.
// lr(t) = eta_min + (base - eta_min) * (1 + cos(pi * t_cur / t_i)) / 2,
// t_i multiplied by t_mult at each restart.
class CosineWarmRestarts {
public:
    CosineWarmRestarts(double base_lr, int t0, double t_mult = 1.0, double eta_min = 0.0)
        : base_lr_(base_lr), eta_min_(eta_min), t_mult_(t_mult), t_i_(t0) {}

    double lr() const;
    void epoch_step();

    int t_cur() const { return t_cur_; }
    int t_i() const { return t_i_; }
    void restore(int t_cur, int t_i) { t_cur_ = t_cur; t_i_ = t_i; }

private:
    double base_lr_;
    double eta_min_;
    double t_mult_;
    int t_i_;
    int t_cur_ = 0;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed parameter group. Moments are addressable by parameter name
// for checkpointing.
class Adam {
public:
    Adam(std::string name, ParamGroup params, AdamConfig cfg);

    // One update from the gradients currently stored on the parameters.
    // lr_scale multiplies cfg.lr (scheduler hook). Gradients are not cleared.
    void step(double lr_scale = 1.0);

    // Scales gradients so their global L2 norm is at most max_norm.
    void clip_grad_norm(double max_norm);

    const std::string& name() const { return name_; }
    const ParamGroup& params() const { return params_; }
    long step_count() const { return step_count_; }

    // Checkpoint surface: moment matrices plus step counter.
    std::vector<std::pair<std::string, const Mat*>> state() const;
    void restore_moment(const std::string& key, const Mat& value);
    void restore_step_count(long t) { step_count_ = t; }

private:
    std::string name_;
    ParamGroup params_;
    AdamConfig cfg_;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
    long step_count_ = 0;
};

}  // namespace mre::nn
