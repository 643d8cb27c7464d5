// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/metrics.hpp"

#include <cmath>
#include <string>

namespace depthconv {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.num_classes() != num_classes()) throw MetricsError("confusion matrices differ in class count");
    counts += other.counts;
    return *this;
}

ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) {
    a += b;
    return a;
}

void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt, std::int32_t ignore) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw MetricsError("confusion: label maps differ in size");
    const int k = cm.num_classes();
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
        const auto t = gt.data()[i];
        if (t == ignore) continue;
        const auto p = pred.data()[i];
        if (t < 0 || t >= k) throw MetricsError("confusion: ground-truth class " + std::to_string(t) + " out of range");
        if (p < 0 || p >= k) throw MetricsError("confusion: predicted class " + std::to_string(p) + " out of range");
        ++cm.counts(t, p);
    }
}

ConfusionMatrix confusion_accumulate(const LabelMap& pred, const LabelMap& gt, int classes, std::int32_t ignore) {
    if (classes < 1) throw MetricsError("confusion: need at least one class");
    ConfusionMatrix cm(classes);
    confusion_accumulate(cm, pred, gt, ignore);
    return cm;
}

SegScores seg_scores(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw MetricsError("seg_scores: empty confusion matrix");
    SegScores s;
    double acc_sum = 0.0, iou_sum = 0.0;
    int acc_n = 0, iou_n = 0;
    std::int64_t diag = 0;
    for (int i = 0; i < cm.num_classes(); ++i) {
        const auto nii = cm.counts(i, i);
        const auto ti = cm.row_sum(i);
        diag += nii;
        if (ti > 0) {
            acc_sum += static_cast<double>(nii) / static_cast<double>(ti);
            ++acc_n;
        }
        const auto uni = ti + cm.col_sum(i) - nii;
        if (uni > 0) {
            iou_sum += static_cast<double>(nii) / static_cast<double>(uni);
            ++iou_n;
        }
    }
    s.acc = static_cast<double>(diag) / static_cast<double>(total);
    s.macc = acc_sum / acc_n;
    s.miou = iou_sum / iou_n;
    return s;
}

void DepthErrorAccumulator::add(const Plane& pred, const DepthMap& gt) {
    if (pred.rows() != gt.height() || pred.cols() != gt.width()) throw MetricsError("depth_scores: size mismatch");
    for (Eigen::Index y = 0; y < gt.height(); ++y) {
        for (Eigen::Index x = 0; x < gt.width(); ++x) {
            if (!gt.valid(y, x)) continue;
            const double p = pred(y, x), g = gt.values(y, x);
            if (!(p > 0.0)) throw MetricsError("depth_scores: non-positive prediction at a valid pixel");
            sum_sq_ += (p - g) * (p - g);
            sum_log_ += std::abs(std::log10(p / g));
            ++n_;
            if (grad_stencil_ok(gt, y, x)) {
                const double gx = (gt.values(y, x + 1) - g) - (pred(y, x + 1) - p);
                const double gy = (gt.values(y + 1, x) - g) - (pred(y + 1, x) - p);
                sum_grad_ += std::abs(gx) + std::abs(gy);
                ++n_grad_;
            }
        }
    }
}

DepthScores DepthErrorAccumulator::scores() const {
    if (n_ == 0) throw MetricsError("depth_scores: no valid pixels");
    DepthScores s;
    s.rms = std::sqrt(sum_sq_ / static_cast<double>(n_));
    s.log10 = sum_log_ / static_cast<double>(n_);
    s.grad = n_grad_ ? sum_grad_ / static_cast<double>(n_grad_) : 0.0;
    return s;
}

DepthScores depth_scores(const Plane& pred, const DepthMap& gt) {
    DepthErrorAccumulator acc;
    acc.add(pred, gt);
    return acc.scores();
}

}  // namespace depthconv
