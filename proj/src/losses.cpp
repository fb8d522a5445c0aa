#include "rcir/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcir {

Mat gram(const Mat& feature) {
    Mat k(feature.rows, feature.rows);
    for (int i = 0; i < feature.rows; ++i)
        for (int j = i; j < feature.rows; ++j) {
            double s = 0.0;
            for (int d = 0; d < feature.cols; ++d) s += feature(i, d) * feature(j, d);
            k(i, j) = s;
            k(j, i) = s;
        }
    return k;
}

Mat center_gram(const Mat& k) {
    if (k.rows != k.cols) throw std::invalid_argument("center_gram: matrix must be square");
    const int q = k.rows;
    Vec row_mean(static_cast<std::size_t>(q), 0.0);
    Vec col_mean(static_cast<std::size_t>(q), 0.0);
    double total = 0.0;
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            row_mean[static_cast<std::size_t>(i)] += k(i, j);
            col_mean[static_cast<std::size_t>(j)] += k(i, j);
            total += k(i, j);
        }
    for (auto& v : row_mean) v /= q;
    for (auto& v : col_mean) v /= q;
    total /= static_cast<double>(q) * q;

    Mat out(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
            out(i, j) = k(i, j) - row_mean[static_cast<std::size_t>(i)] -
                        col_mean[static_cast<std::size_t>(j)] + total;
    return out;
}

namespace {

void require_matched_batches(const std::vector<Mat>& f, const std::vector<Mat>& fhat) {
    if (f.size() != fhat.size() || f.empty())
        throw std::invalid_argument("consistency: batches must be non-empty and equal length");
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!f[i].same_shape(fhat[i]))
            throw std::invalid_argument("consistency: feature shape mismatch");
}

}  // namespace

ConsistencyResult cka_loss(const std::vector<Mat>& f, const std::vector<Mat>& fhat) {
    require_matched_batches(f, fhat);
    const int b = static_cast<int>(f.size());
    ConsistencyResult res;
    res.grad_f.resize(f.size());
    res.grad_fhat.resize(f.size());

    for (std::size_t i = 0; i < f.size(); ++i) {
        const Mat kbar = center_gram(gram(f[i]));
        const Mat lbar = center_gram(gram(fhat[i]));
        const double a = frob_dot(kbar, lbar);
        const double nk = frob_norm(kbar);
        const double nl = frob_norm(lbar);
        const double denom = nk * nl + kLossEps;
        const double cka = a / denom;
        res.value += (1.0 - cka) / b;
        if (nk < 1e-12 || nl < 1e-12) ++res.degenerate;

        // d(cka)/d(Kbar) = Lbar/denom - cka * nl * (Kbar/nk) / denom, then
        // through the (self-adjoint) centering map and the Gram product.
        Mat gk(kbar.rows, kbar.cols);
        Mat gl(kbar.rows, kbar.cols);
        for (std::size_t e = 0; e < gk.data.size(); ++e) {
            double dk = lbar.data[e] / denom;
            double dl = kbar.data[e] / denom;
            if (nk > 1e-12) dk -= cka * nl * kbar.data[e] / (nk * denom);
            if (nl > 1e-12) dl -= cka * nk * lbar.data[e] / (nl * denom);
            gk.data[e] = dk;
            gl.data[e] = dl;
        }
        const Mat gk_c = center_gram(gk);
        const Mat gl_c = center_gram(gl);
        // loss_i = (1 - cka)/B, so the sign flips and the factor 2 comes from
        // dK = dF F^T + F dF^T with a symmetric upstream gradient.
        Mat gf = matmul(gk_c, f[i]);
        Mat gfh = matmul(gl_c, fhat[i]);
        for (auto& v : gf.data) v *= -2.0 / b;
        for (auto& v : gfh.data) v *= -2.0 / b;
        res.grad_f[i] = std::move(gf);
        res.grad_fhat[i] = std::move(gfh);
    }
    return res;
}

ConsistencyResult consistency_loss(const std::vector<Mat>& f, const std::vector<Mat>& fhat,
                                   ConsistencyMetric metric) {
    if (metric == ConsistencyMetric::kCka) return cka_loss(f, fhat);
    require_matched_batches(f, fhat);
    const int b = static_cast<int>(f.size());
    ConsistencyResult res;
    res.grad_f.resize(f.size());
    res.grad_fhat.resize(f.size());

    for (std::size_t i = 0; i < f.size(); ++i) {
        const std::size_t n = f[i].data.size();
        Mat gf(f[i].rows, f[i].cols);
        Mat gfh(f[i].rows, f[i].cols);
        switch (metric) {
            case ConsistencyMetric::kMse: {
                double s = 0.0;
                for (std::size_t e = 0; e < n; ++e) {
                    const double d = f[i].data[e] - fhat[i].data[e];
                    s += d * d;
                    gf.data[e] = 2.0 * d / (static_cast<double>(n) * b);
                    gfh.data[e] = -gf.data[e];
                }
                res.value += s / (static_cast<double>(n) * b);
                break;
            }
            case ConsistencyMetric::kL1: {
                double s = 0.0;
                for (std::size_t e = 0; e < n; ++e) {
                    const double d = f[i].data[e] - fhat[i].data[e];
                    s += std::abs(d);
                    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    gf.data[e] = sign / (static_cast<double>(n) * b);
                    gfh.data[e] = -gf.data[e];
                }
                res.value += s / (static_cast<double>(n) * b);
                break;
            }
            case ConsistencyMetric::kL2: {
                double s = 0.0;
                for (std::size_t e = 0; e < n; ++e) {
                    const double d = f[i].data[e] - fhat[i].data[e];
                    s += d * d;
                }
                const double nrm = std::sqrt(s);
                res.value += nrm / b;
                if (nrm > 0.0)
                    for (std::size_t e = 0; e < n; ++e) {
                        const double d = f[i].data[e] - fhat[i].data[e];
                        gf.data[e] = d / (nrm * b);
                        gfh.data[e] = -gf.data[e];
                    }
                break;
            }
            default:
                throw std::invalid_argument("consistency_loss: unknown metric");
        }
        res.grad_f[i] = std::move(gf);
        res.grad_fhat[i] = std::move(gfh);
    }
    return res;
}

SimilarityMatrix similarity_matrix(const std::vector<Vec>& composed,
                                   const std::vector<Vec>& targets, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("similarity: tau must be positive");
    if (composed.size() != targets.size() || composed.size() < 2)
        throw std::invalid_argument("similarity: need equal-length batches with B >= 2");
    const int b = static_cast<int>(composed.size());
    for (const auto& v : composed)
        if (std::abs(norm(v) - 1.0) > 1e-3)
            throw std::invalid_argument("similarity: composed vectors must be unit norm");
    for (const auto& v : targets)
        if (std::abs(norm(v) - 1.0) > 1e-3)
            throw std::invalid_argument("similarity: target vectors must be unit norm");

    SimilarityMatrix s;
    s.batch = b;
    s.tau = tau;
    s.raw = Mat(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            s.raw(i, j) = dot(composed[static_cast<std::size_t>(i)],
                              targets[static_cast<std::size_t>(j)]);
    Mat logits = s.raw;
    for (auto& v : logits.data) v /= tau;
    s.probs = softmax_rows(logits);
    return s;
}

Mat softmax_rows(const Mat& logits) {
    Mat probs(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double mx = logits(i, 0);
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double denom = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            probs(i, j) = std::exp(logits(i, j) - mx);
            denom += probs(i, j);
        }
        for (int j = 0; j < logits.cols; ++j) probs(i, j) /= denom;
    }
    return probs;
}

Mat softmax_rows_backward(const Mat& probs, const Mat& dprobs) {
    if (!probs.same_shape(dprobs))
        throw std::invalid_argument("softmax_rows_backward: shape mismatch");
    Mat dlogits(probs.rows, probs.cols);
    for (int i = 0; i < probs.rows; ++i) {
        double weighted = 0.0;
        for (int j = 0; j < probs.cols; ++j) weighted += dprobs(i, j) * probs(i, j);
        for (int j = 0; j < probs.cols; ++j)
            dlogits(i, j) = probs(i, j) * (dprobs(i, j) - weighted);
    }
    return dlogits;
}

Mat diagonal_labels(int batch) {
    Mat y(batch, batch);
    for (int i = 0; i < batch; ++i) y(i, i) = 1.0;
    return y;
}

void validate_labels(const Mat& y) {
    if (y.rows != y.cols || y.rows < 2)
        throw std::invalid_argument("labels: must be square with B >= 2");
    for (int i = 0; i < y.rows; ++i) {
        int ones = 0;
        for (int j = 0; j < y.cols; ++j) {
            if (y(i, j) != 0.0 && y(i, j) != 1.0)
                throw std::invalid_argument("labels: entries must be 0 or 1");
            if (y(i, j) == 1.0) ++ones;
        }
        if (ones != 1) throw std::invalid_argument("labels: need exactly one 1 per row");
    }
}

ProbsLoss robust_loss_from_probs(const Mat& probs, const Mat& y, bool mask_diagonal,
                                 bool positive_summand) {
    validate_labels(y);
    if (!probs.same_shape(y)) throw std::invalid_argument("robust loss: shape mismatch");
    const int b = probs.rows;
    ProbsLoss out;
    out.grad_probs = Mat(b, b);

    if (positive_summand) {
        // Literal printed form: the summand is the positive probability,
        // repeated over the j != i sum.
        for (int i = 0; i < b; ++i) {
            int pos = 0;
            for (int j = 0; j < b; ++j)
                if (y(i, j) == 1.0) pos = j;
            const double t = 1.0 - probs(i, pos);
            const double tc = std::max(t, kLossEps);
            out.value += -(b - 1) * std::log(tc) / b;
            if (t > kLossEps) out.grad_probs(i, pos) = static_cast<double>(b - 1) / (b * tc);
        }
        return out;
    }

    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            if (mask_diagonal && y(i, j) == 1.0) continue;
            const double t = 1.0 - probs(i, j);
            const double tc = std::max(t, kLossEps);
            out.value += -std::log(tc) / b;
            if (t > kLossEps) out.grad_probs(i, j) = 1.0 / (b * tc);
        }
    return out;
}

RobustLossResult robust_contrastive_loss(const std::vector<Vec>& composed,
                                         const std::vector<Vec>& targets, double tau,
                                         bool mask_diagonal, bool positive_summand) {
    const SimilarityMatrix s = similarity_matrix(composed, targets, tau);
    const Mat y = diagonal_labels(s.batch);
    const ProbsLoss pl = robust_loss_from_probs(s.probs, y, mask_diagonal, positive_summand);

    RobustLossResult res;
    res.value = pl.value;
    res.probs = s.probs;
    res.grad_composed.assign(composed.size(), Vec(composed[0].size(), 0.0));
    res.grad_targets.assign(targets.size(), Vec(targets[0].size(), 0.0));
    const Mat dlogits = softmax_rows_backward(s.probs, pl.grad_probs);
    cosine_logits_backward(composed, targets, tau, dlogits, res.grad_composed,
                           res.grad_targets);
    return res;
}

Likelihoods matching_likelihoods(const Mat& probs, const Mat& y) {
    validate_labels(y);
    if (!probs.same_shape(y))
        throw std::invalid_argument("matching_likelihoods: shape mismatch");
    const int b = probs.rows;
    Likelihoods lk;
    lk.p_pos.assign(static_cast<std::size_t>(b), 0.0);
    lk.p_neg.assign(static_cast<std::size_t>(b), 0.0);
    lk.argmax_pos.assign(static_cast<std::size_t>(b), -1);
    lk.argmax_neg.assign(static_cast<std::size_t>(b), -1);
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            if (y(i, j) == 1.0) {
                // One positive per validated row.
                lk.p_pos[static_cast<std::size_t>(i)] = probs(i, j);
                lk.argmax_pos[static_cast<std::size_t>(i)] = j;
            } else if (lk.argmax_neg[static_cast<std::size_t>(i)] < 0 ||
                       probs(i, j) > lk.p_neg[static_cast<std::size_t>(i)]) {
                // Strict > keeps the smallest index on ties.
                lk.p_neg[static_cast<std::size_t>(i)] = probs(i, j);
                lk.argmax_neg[static_cast<std::size_t>(i)] = j;
            }
        }
    }
    return lk;
}

LoyaltyResult loyalty_matrix(const Mat& probs, const Mat& y, const LoyaltyOptions& options) {
    const int b = probs.rows;
    LoyaltyResult res;
    res.likelihoods = matching_likelihoods(probs, y);
    res.negatives = Mat(b, b);
    res.positives = Mat(b, b);
    res.loyalty = Mat(b, b);
    for (int i = 0; i < b; ++i) {
        const double npos = 1.0 - res.likelihoods.p_pos[static_cast<std::size_t>(i)];
        const double nneg = 1.0 - res.likelihoods.p_neg[static_cast<std::size_t>(i)];
        for (int j = 0; j < b; ++j) {
            if (options.negative_reward) res.negatives(i, j) = npos * (1.0 - y(i, j));
            if (options.positive_reward) res.positives(i, j) = nneg * y(i, j);
            const double raw =
                (probs(i, j) + res.negatives(i, j) + res.positives(i, j)) / 2.0;
            res.loyalty(i, j) = std::clamp(raw, kLossEps, 1.0);
        }
    }
    return res;
}

SoftLossResult soft_discriminative_loss(const Mat& probs, const Mat& y,
                                        const LoyaltyOptions& options) {
    SoftLossResult res;
    res.loyalty = loyalty_matrix(probs, y, options);
    const int b = probs.rows;
    res.grad_probs = Mat(b, b);
    for (int i = 0; i < b; ++i) {
        int pos = 0;
        for (int j = 0; j < b; ++j)
            if (y(i, j) == 1.0) pos = j;
        const double l = res.loyalty.loyalty(i, pos);
        res.value += -std::log(l) / b;

        const double raw = (probs(i, pos) + res.loyalty.negatives(i, pos) +
                            res.loyalty.positives(i, pos)) /
                           2.0;
        if (raw <= kLossEps || raw >= 1.0) continue;  // clamped flat
        const double coeff = -1.0 / (b * l);
        res.grad_probs(i, pos) += coeff * 0.5;
        if (options.positive_reward && !options.stop_gradient_rewards) {
            // r_ii = 1 - p_i^-; subgradient through the max to its argmax.
            const int jn = res.loyalty.likelihoods.argmax_neg[static_cast<std::size_t>(i)];
            if (jn >= 0) res.grad_probs(i, jn) += coeff * (-0.5);
        }
    }
    return res;
}

void cosine_logits_backward(const std::vector<Vec>& u, const std::vector<Vec>& v,
                            double tau, const Mat& dlogits, std::vector<Vec>& du,
                            std::vector<Vec>& dv) {
    const int b = dlogits.rows;
    const std::size_t dim = u[0].size();
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            const double g = dlogits(i, j) / tau;
            if (g == 0.0) continue;
            for (std::size_t k = 0; k < dim; ++k) {
                du[static_cast<std::size_t>(i)][k] += g * v[static_cast<std::size_t>(j)][k];
                dv[static_cast<std::size_t>(j)][k] += g * u[static_cast<std::size_t>(i)][k];
            }
        }
}

}  // namespace rcir
