// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "depthconv/geometry.hpp"
#include "depthconv/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>

namespace depthconv {

class MetricsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct ConfusionMatrix {
    using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

    Counts counts;  // counts(i, j): true class i predicted as j

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int classes) : counts(Counts::Zero(classes, classes)) {}

    int num_classes() const { return static_cast<int>(counts.rows()); }
    std::int64_t total() const { return counts.sum(); }
    std::int64_t row_sum(int i) const { return counts.row(i).sum(); }
    std::int64_t col_sum(int j) const { return counts.col(j).sum(); }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b);

// Pixels whose gt label equals `ignore` are skipped.
void confusion_accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                          std::int32_t ignore = kIgnoreLabel);
ConfusionMatrix confusion_accumulate(const LabelMap& pred, const LabelMap& gt, int classes,
                                     std::int32_t ignore = kIgnoreLabel);

struct SegScores {
    double acc = 0.0;
    double macc = 0.0;
    double miou = 0.0;
};

// Classes absent from both ground truth and predictions are left out of the
// means; a class that is only predicted still counts in mIoU with IoU 0.
SegScores seg_scores(const ConfusionMatrix& cm);

// Forward-difference stencil shared by the gradient loss and the grad score:
// pixel (y, x) counts when (y, x), (y, x+1) and (y+1, x) all exist and are valid.
inline bool grad_stencil_ok(const DepthMap& gt, Eigen::Index y, Eigen::Index x) {
    return y + 1 < gt.height() && x + 1 < gt.width() && gt.valid(y, x) && gt.valid(y, x + 1) &&
           gt.valid(y + 1, x);
}

struct DepthScores {
    double rms = 0.0;
    double log10 = 0.0;
    double grad = 0.0;
};

// Corpus accumulator: sums are kept so that scores over several maps equal
// scores over their union.
class DepthErrorAccumulator {
public:
    void add(const Plane& pred, const DepthMap& gt);
    DepthScores scores() const;
    std::int64_t valid_pixels() const { return n_; }

private:
    double sum_sq_ = 0.0, sum_log_ = 0.0, sum_grad_ = 0.0;
    std::int64_t n_ = 0, n_grad_ = 0;
};

DepthScores depth_scores(const Plane& pred, const DepthMap& gt);

}  // namespace depthconv
