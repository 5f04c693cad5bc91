#include "clipin/losses.hpp"

#include <algorithm>
#include <cmath>

#include "clipin/error.hpp"

namespace clipin {

void Temperature::validate() const {
    if (!(value > 0.0)) throw ConfigError("temperature must be positive");
    if (!(max_inverse > 0.0)) throw ConfigError("temperature clamp bound must be positive");
    if (learnable && 1.0 / value > max_inverse + 1e-12)
        throw ConfigError("1/tau exceeds the clamp bound");
}

double Temperature::log_inverse() const { return std::log(1.0 / value); }

Temperature Temperature::from_log_inverse(double log_inv, bool learnable, double max_inverse) {
    Temperature t;
    t.value = std::exp(-log_inv);
    t.learnable = learnable;
    t.max_inverse = max_inverse;
    t.clamp();
    return t;
}

void Temperature::clamp() {
    if (1.0 / value > max_inverse) value = 1.0 / max_inverse;
}

void LossWeights::validate() const {
    if (lambda_short < 0.0 || lambda_long < 0.0 || lambda_hn < 0.0)
        throw ConfigError("loss weights must be nonnegative");
    if (lambda_short == 0.0 && lambda_long == 0.0 && lambda_hn == 0.0)
        throw ConfigError("loss weights must not all be zero");
}

void HardBatch::validate() const {
    const std::size_t n = src_img.size();
    if (n < 1) throw Error("hard batch must be nonempty");
    if (tgt_img.size() != n || src_txt.size() != n || tgt_txt.size() != n)
        throw Error("hard batch arrays must have equal length");
    const std::size_t d = src_img[0].size();
    for (const auto* arr : {&src_img, &tgt_img, &src_txt, &tgt_txt})
        for (const Embedding& e : *arr)
            if (e.size() != d) throw Error("hard batch embedding dimensions differ");
}

namespace {

void check_pair(std::span<const Embedding> a, std::span<const Embedding> b) {
    if (a.empty() || b.empty()) throw Error("empty batch");
    if (a.size() != b.size()) throw Error("batch length mismatch");
    if (a[0].size() != b[0].size()) throw Error("embedding dimensions differ");
}

void check_tau(double tau) {
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
}

Tensor raw_sims(std::span<const Embedding> a, std::span<const Embedding> b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    Tensor s({n, m});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < m; ++k) s(i, k) = dot(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(k)]);
    return s;
}

std::vector<Embedding> zeros_like(std::span<const Embedding> a) {
    std::vector<Embedding> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i].assign(a[i].size(), 0.0);
    return out;
}

// out[i] += c * v
void axpy(Embedding& out, double c, const Embedding& v) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * v[i];
}

}  // namespace

Tensor similarity_matrix(std::span<const Embedding> a, std::span<const Embedding> b) {
    if (a.empty() || b.empty()) throw Error("empty batch");
    if (a[0].size() != b[0].size()) throw Error("embedding dimensions differ");
    Tensor s = raw_sims(a, b);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] < -1.0 - 1e-9 || s[i] > 1.0 + 1e-9)
            throw Error("similarity outside [-1,1]; inputs are not unit embeddings");
    return s;
}

// ----- similarity-level losses --------------------------------------------

double info_nce_from_sims(const Tensor& sims, double tau) {
    check_tau(tau);
    const int n = sims.rows();
    if (n == 0 || sims.size() == 0) throw Error("empty batch");
    if (sims.cols() != n) throw Error("diagonal positives require a square matrix");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = sims(i, 0) / tau;
        for (int k = 1; k < n; ++k) mx = std::max(mx, sims(i, k) / tau);
        double z = 0.0;
        for (int k = 0; k < n; ++k) z += std::exp(sims(i, k) / tau - mx);
        loss += -(sims(i, i) / tau - (mx + std::log(z)));
    }
    return loss / n;
}

SimGrad info_nce_from_sims_grad(const Tensor& sims, double tau) {
    check_tau(tau);
    const int n = sims.rows();
    if (n == 0 || sims.size() == 0) throw Error("empty batch");
    if (sims.cols() != n) throw Error("diagonal positives require a square matrix");
    SimGrad out;
    out.d_sims = Tensor({n, n});
    for (int i = 0; i < n; ++i) {
        double mx = sims(i, 0) / tau;
        for (int k = 1; k < n; ++k) mx = std::max(mx, sims(i, k) / tau);
        double z = 0.0;
        for (int k = 0; k < n; ++k) z += std::exp(sims(i, k) / tau - mx);
        out.value += -(sims(i, i) / tau - (mx + std::log(z)));
        double expected_sim = 0.0;
        for (int k = 0; k < n; ++k) {
            const double p = std::exp(sims(i, k) / tau - mx) / z;
            out.d_sims(i, k) = p / (n * tau);
            expected_sim += p * sims(i, k);
        }
        out.d_sims(i, i) -= 1.0 / (n * tau);
        out.d_tau += (sims(i, i) - expected_sim) / (n * tau * tau);
    }
    out.value /= n;
    return out;
}

double neg_cl_from_sims(const Tensor& pos_sims, const Tensor& neg_sims, double tau) {
    check_tau(tau);
    const int n = pos_sims.rows();
    if (n == 0) throw Error("empty batch");
    if (pos_sims.cols() != n) throw Error("diagonal positives require a square matrix");
    if (neg_sims.rows() != n) throw Error("negative similarity row count mismatch");
    const int m = neg_sims.cols();
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = pos_sims(i, 0) / tau;
        for (int k = 1; k < n; ++k) mx = std::max(mx, pos_sims(i, k) / tau);
        for (int j = 0; j < m; ++j) mx = std::max(mx, neg_sims(i, j) / tau);
        double z = 0.0;
        for (int k = 0; k < n; ++k) z += std::exp(pos_sims(i, k) / tau - mx);
        for (int j = 0; j < m; ++j) z += std::exp(neg_sims(i, j) / tau - mx);
        loss += -(pos_sims(i, i) / tau - (mx + std::log(z)));
    }
    return loss / n;
}

NegSimGrad neg_cl_from_sims_grad(const Tensor& pos_sims, const Tensor& neg_sims, double tau) {
    check_tau(tau);
    const int n = pos_sims.rows();
    if (n == 0) throw Error("empty batch");
    if (pos_sims.cols() != n) throw Error("diagonal positives require a square matrix");
    if (neg_sims.rows() != n) throw Error("negative similarity row count mismatch");
    const int m = neg_sims.cols();
    NegSimGrad out;
    out.d_pos = Tensor({n, n});
    out.d_neg = Tensor({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = pos_sims(i, 0) / tau;
        for (int k = 1; k < n; ++k) mx = std::max(mx, pos_sims(i, k) / tau);
        for (int j = 0; j < m; ++j) mx = std::max(mx, neg_sims(i, j) / tau);
        double z = 0.0;
        for (int k = 0; k < n; ++k) z += std::exp(pos_sims(i, k) / tau - mx);
        for (int j = 0; j < m; ++j) z += std::exp(neg_sims(i, j) / tau - mx);
        out.value += -(pos_sims(i, i) / tau - (mx + std::log(z)));
        double expected_sim = 0.0;
        for (int k = 0; k < n; ++k) {
            const double p = std::exp(pos_sims(i, k) / tau - mx) / z;
            out.d_pos(i, k) = p / (n * tau);
            expected_sim += p * pos_sims(i, k);
        }
        for (int j = 0; j < m; ++j) {
            const double p = std::exp(neg_sims(i, j) / tau - mx) / z;
            out.d_neg(i, j) = p / (n * tau);
            expected_sim += p * neg_sims(i, j);
        }
        out.d_pos(i, i) -= 1.0 / (n * tau);
        out.d_tau += (pos_sims(i, i) - expected_sim) / (n * tau * tau);
    }
    out.value /= n;
    return out;
}

double triplet_cl_from_sims(const Tensor& pos_sims, std::span<const double> own_neg_sims,
                            double tau) {
    check_tau(tau);
    const int n = pos_sims.rows();
    if (n == 0) throw Error("empty batch");
    if (pos_sims.cols() != n) throw Error("diagonal positives require a square matrix");
    if (static_cast<int>(own_neg_sims.size()) != n) throw Error("own-negative count mismatch");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = own_neg_sims[static_cast<std::size_t>(i)] / tau;
        for (int k = 0; k < n; ++k) mx = std::max(mx, pos_sims(i, k) / tau);
        double z = std::exp(own_neg_sims[static_cast<std::size_t>(i)] / tau - mx);
        for (int k = 0; k < n; ++k) z += std::exp(pos_sims(i, k) / tau - mx);
        loss += -(pos_sims(i, i) / tau - (mx + std::log(z)));
    }
    return loss / n;
}

NegSimGrad triplet_cl_from_sims_grad(const Tensor& pos_sims, std::span<const double> own_neg_sims,
                                     double tau) {
    check_tau(tau);
    const int n = pos_sims.rows();
    if (n == 0) throw Error("empty batch");
    if (pos_sims.cols() != n) throw Error("diagonal positives require a square matrix");
    if (static_cast<int>(own_neg_sims.size()) != n) throw Error("own-negative count mismatch");
    NegSimGrad out;
    out.d_pos = Tensor({n, n});
    out.d_neg = Tensor({n, 1});
    for (int i = 0; i < n; ++i) {
        const double sn = own_neg_sims[static_cast<std::size_t>(i)];
        double mx = sn / tau;
        for (int k = 0; k < n; ++k) mx = std::max(mx, pos_sims(i, k) / tau);
        double z = std::exp(sn / tau - mx);
        for (int k = 0; k < n; ++k) z += std::exp(pos_sims(i, k) / tau - mx);
        out.value += -(pos_sims(i, i) / tau - (mx + std::log(z)));
        double expected_sim = 0.0;
        for (int k = 0; k < n; ++k) {
            const double p = std::exp(pos_sims(i, k) / tau - mx) / z;
            out.d_pos(i, k) = p / (n * tau);
            expected_sim += p * pos_sims(i, k);
        }
        const double pn = std::exp(sn / tau - mx) / z;
        out.d_neg(i, 0) = pn / (n * tau);
        expected_sim += pn * sn;
        out.d_pos(i, i) -= 1.0 / (n * tau);
        out.d_tau += (pos_sims(i, i) - expected_sim) / (n * tau * tau);
    }
    out.value /= n;
    return out;
}

// ----- embedding-level losses ----------------------------------------------

double info_nce(std::span<const Embedding> anchors, std::span<const Embedding> candidates,
                double tau) {
    check_pair(anchors, candidates);
    return info_nce_from_sims(raw_sims(anchors, candidates), tau);
}

PairLossGrad info_nce_grad(std::span<const Embedding> anchors,
                           std::span<const Embedding> candidates, double tau) {
    check_pair(anchors, candidates);
    const SimGrad sg = info_nce_from_sims_grad(raw_sims(anchors, candidates), tau);
    PairLossGrad out;
    out.value = sg.value;
    out.d_tau = sg.d_tau;
    out.d_anchors = zeros_like(anchors);
    out.d_candidates = zeros_like(candidates);
    const int n = static_cast<int>(anchors.size());
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double g = sg.d_sims(i, k);
            if (g == 0.0) continue;
            axpy(out.d_anchors[static_cast<std::size_t>(i)], g, candidates[static_cast<std::size_t>(k)]);
            axpy(out.d_candidates[static_cast<std::size_t>(k)], g, anchors[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

double clip_loss(std::span<const Embedding> img, std::span<const Embedding> txt, double tau) {
    return info_nce(img, txt, tau) + info_nce(txt, img, tau);
}

ClipLossGrad clip_loss_grad(std::span<const Embedding> img, std::span<const Embedding> txt,
                            double tau) {
    const PairLossGrad i2t = info_nce_grad(img, txt, tau);
    const PairLossGrad t2i = info_nce_grad(txt, img, tau);
    ClipLossGrad out;
    out.value = i2t.value + t2i.value;
    out.d_tau = i2t.d_tau + t2i.d_tau;
    out.d_img = i2t.d_anchors;
    out.d_txt = i2t.d_candidates;
    for (std::size_t i = 0; i < out.d_img.size(); ++i) axpy(out.d_img[i], 1.0, t2i.d_candidates[i]);
    for (std::size_t i = 0; i < out.d_txt.size(); ++i) axpy(out.d_txt[i], 1.0, t2i.d_anchors[i]);
    return out;
}

double neg_cl(std::span<const Embedding> anchors, std::span<const Embedding> positives,
              std::span<const Embedding> hard_negs, double tau) {
    check_pair(anchors, positives);
    if (hard_negs.size() != anchors.size()) throw Error("batch length mismatch");
    return neg_cl_from_sims(raw_sims(anchors, positives), raw_sims(anchors, hard_negs), tau);
}

NegClGrad neg_cl_grad(std::span<const Embedding> anchors, std::span<const Embedding> positives,
                      std::span<const Embedding> hard_negs, double tau) {
    check_pair(anchors, positives);
    if (hard_negs.size() != anchors.size()) throw Error("batch length mismatch");
    const NegSimGrad sg =
        neg_cl_from_sims_grad(raw_sims(anchors, positives), raw_sims(anchors, hard_negs), tau);
    NegClGrad out;
    out.value = sg.value;
    out.d_tau = sg.d_tau;
    out.d_anchors = zeros_like(anchors);
    out.d_positives = zeros_like(positives);
    out.d_negs = zeros_like(hard_negs);
    const int n = static_cast<int>(anchors.size());
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double gp = sg.d_pos(i, k);
            axpy(out.d_anchors[static_cast<std::size_t>(i)], gp, positives[static_cast<std::size_t>(k)]);
            axpy(out.d_positives[static_cast<std::size_t>(k)], gp, anchors[static_cast<std::size_t>(i)]);
            const double gn = sg.d_neg(i, k);
            axpy(out.d_anchors[static_cast<std::size_t>(i)], gn, hard_negs[static_cast<std::size_t>(k)]);
            axpy(out.d_negs[static_cast<std::size_t>(k)], gn, anchors[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

HardNegativeLoss hard_negative_loss(const HardBatch& b, double tau) {
    b.validate();
    HardNegativeLoss out;
    out.image_side = neg_cl(b.src_img, b.src_txt, b.tgt_txt, tau) +
                     neg_cl(b.tgt_img, b.tgt_txt, b.src_txt, tau);
    out.text_side = neg_cl(b.src_txt, b.src_img, b.tgt_img, tau) +
                    neg_cl(b.tgt_txt, b.tgt_img, b.src_img, tau);
    out.total = out.image_side + out.text_side;
    return out;
}

namespace {

void accumulate(std::vector<Embedding>& dst, const std::vector<Embedding>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) axpy(dst[i], 1.0, src[i]);
}

}  // namespace

HardLossGrad hard_negative_loss_grad(const HardBatch& b, double tau) {
    b.validate();
    HardLossGrad out;
    out.d_src_img = zeros_like(b.src_img);
    out.d_tgt_img = zeros_like(b.tgt_img);
    out.d_src_txt = zeros_like(b.src_txt);
    out.d_tgt_txt = zeros_like(b.tgt_txt);

    const NegClGrad g1 = neg_cl_grad(b.src_img, b.src_txt, b.tgt_txt, tau);
    const NegClGrad g2 = neg_cl_grad(b.tgt_img, b.tgt_txt, b.src_txt, tau);
    const NegClGrad g3 = neg_cl_grad(b.src_txt, b.src_img, b.tgt_img, tau);
    const NegClGrad g4 = neg_cl_grad(b.tgt_txt, b.tgt_img, b.src_img, tau);

    out.value.image_side = g1.value + g2.value;
    out.value.text_side = g3.value + g4.value;
    out.value.total = out.value.image_side + out.value.text_side;
    out.d_tau = g1.d_tau + g2.d_tau + g3.d_tau + g4.d_tau;

    accumulate(out.d_src_img, g1.d_anchors);
    accumulate(out.d_src_txt, g1.d_positives);
    accumulate(out.d_tgt_txt, g1.d_negs);

    accumulate(out.d_tgt_img, g2.d_anchors);
    accumulate(out.d_tgt_txt, g2.d_positives);
    accumulate(out.d_src_txt, g2.d_negs);

    accumulate(out.d_src_txt, g3.d_anchors);
    accumulate(out.d_src_img, g3.d_positives);
    accumulate(out.d_tgt_img, g3.d_negs);

    accumulate(out.d_tgt_txt, g4.d_anchors);
    accumulate(out.d_tgt_img, g4.d_positives);
    accumulate(out.d_src_img, g4.d_negs);
    return out;
}

double negclip_baseline(const HardBatch& b, double tau) {
    b.validate();
    return neg_cl(b.src_img, b.src_txt, b.tgt_txt, tau) +
           neg_cl(b.tgt_img, b.tgt_txt, b.src_txt, tau);
}

EditLossGrad negclip_baseline_grad(const HardBatch& b, double tau) {
    b.validate();
    EditLossGrad out;
    out.d_src_img = zeros_like(b.src_img);
    out.d_tgt_img = zeros_like(b.tgt_img);
    out.d_src_txt = zeros_like(b.src_txt);
    out.d_tgt_txt = zeros_like(b.tgt_txt);
    const NegClGrad g1 = neg_cl_grad(b.src_img, b.src_txt, b.tgt_txt, tau);
    const NegClGrad g2 = neg_cl_grad(b.tgt_img, b.tgt_txt, b.src_txt, tau);
    out.value = g1.value + g2.value;
    out.d_tau = g1.d_tau + g2.d_tau;
    accumulate(out.d_src_img, g1.d_anchors);
    accumulate(out.d_src_txt, g1.d_positives);
    accumulate(out.d_tgt_txt, g1.d_negs);
    accumulate(out.d_tgt_img, g2.d_anchors);
    accumulate(out.d_tgt_txt, g2.d_positives);
    accumulate(out.d_src_txt, g2.d_negs);
    return out;
}

namespace {

std::vector<double> diagonal_sims(std::span<const Embedding> a, std::span<const Embedding> b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = dot(a[i], b[i]);
    return out;
}

// One directional triplet term; accumulates embedding gradients in place.
double triplet_term(std::span<const Embedding> anchors, std::span<const Embedding> positives,
                    std::span<const Embedding> own_negs, double tau,
                    std::vector<Embedding>* d_anchors, std::vector<Embedding>* d_positives,
                    std::vector<Embedding>* d_negs, double* d_tau) {
    const Tensor sp = raw_sims(anchors, positives);
    const std::vector<double> sn = diagonal_sims(anchors, own_negs);
    if (!d_anchors) return triplet_cl_from_sims(sp, sn, tau);
    const NegSimGrad sg = triplet_cl_from_sims_grad(sp, sn, tau);
    const int n = static_cast<int>(anchors.size());
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double gp = sg.d_pos(i, k);
            axpy((*d_anchors)[static_cast<std::size_t>(i)], gp, positives[static_cast<std::size_t>(k)]);
            axpy((*d_positives)[static_cast<std::size_t>(k)], gp, anchors[static_cast<std::size_t>(i)]);
        }
        const double gn = sg.d_neg(i, 0);
        axpy((*d_anchors)[static_cast<std::size_t>(i)], gn, own_negs[static_cast<std::size_t>(i)]);
        axpy((*d_negs)[static_cast<std::size_t>(i)], gn, anchors[static_cast<std::size_t>(i)]);
    }
    *d_tau += sg.d_tau;
    return sg.value;
}

}  // namespace

double triplet_baseline(const HardBatch& b, double tau) {
    b.validate();
    double v = 0.0;
    v += triplet_term(b.src_img, b.src_txt, b.tgt_txt, tau, nullptr, nullptr, nullptr, nullptr);
    v += triplet_term(b.tgt_img, b.tgt_txt, b.src_txt, tau, nullptr, nullptr, nullptr, nullptr);
    v += triplet_term(b.src_txt, b.src_img, b.tgt_img, tau, nullptr, nullptr, nullptr, nullptr);
    v += triplet_term(b.tgt_txt, b.tgt_img, b.src_img, tau, nullptr, nullptr, nullptr, nullptr);
    return v;
}

EditLossGrad triplet_baseline_grad(const HardBatch& b, double tau) {
    b.validate();
    EditLossGrad out;
    out.d_src_img = zeros_like(b.src_img);
    out.d_tgt_img = zeros_like(b.tgt_img);
    out.d_src_txt = zeros_like(b.src_txt);
    out.d_tgt_txt = zeros_like(b.tgt_txt);
    out.value += triplet_term(b.src_img, b.src_txt, b.tgt_txt, tau, &out.d_src_img, &out.d_src_txt,
                              &out.d_tgt_txt, &out.d_tau);
    out.value += triplet_term(b.tgt_img, b.tgt_txt, b.src_txt, tau, &out.d_tgt_img, &out.d_tgt_txt,
                              &out.d_src_txt, &out.d_tau);
    out.value += triplet_term(b.src_txt, b.src_img, b.tgt_img, tau, &out.d_src_txt, &out.d_src_img,
                              &out.d_tgt_img, &out.d_tau);
    out.value += triplet_term(b.tgt_txt, b.tgt_img, b.src_img, tau, &out.d_tgt_txt, &out.d_tgt_img,
                              &out.d_src_img, &out.d_tau);
    return out;
}

double distill_loss(const Embedding& teacher, const Embedding& student) {
    if (teacher.size() != student.size()) throw Error("embedding dimensions differ");
    const double nt = l2_norm(teacher);
    const double ns = l2_norm(student);
    if (nt == 0.0 || ns == 0.0) throw Error("distill loss requires nonzero-norm inputs");
    return 1.0 - dot(teacher, student) / (nt * ns);
}

DistillGrad distill_loss_grad(const Embedding& teacher, const Embedding& student) {
    if (teacher.size() != student.size()) throw Error("embedding dimensions differ");
    const double nt = l2_norm(teacher);
    const double ns = l2_norm(student);
    if (nt == 0.0 || ns == 0.0) throw Error("distill loss requires nonzero-norm inputs");
    const double cos = dot(teacher, student) / (nt * ns);
    DistillGrad out;
    out.value = 1.0 - cos;
    out.d_teacher.resize(teacher.size());
    out.d_student.resize(student.size());
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        const double that = teacher[i] / nt;
        const double shat = student[i] / ns;
        out.d_teacher[i] = -(shat - cos * that) / nt;
        out.d_student[i] = -(that - cos * shat) / ns;
    }
    return out;
}

double joint_objective(double short_loss, double long_loss, double hn_loss,
                       const LossWeights& w) {
    w.validate();
    if (!std::isfinite(short_loss) || !std::isfinite(long_loss) || !std::isfinite(hn_loss))
        throw Error("joint objective requires finite components");
    return w.lambda_short * short_loss + w.lambda_long * long_loss + w.lambda_hn * hn_loss;
}

}  // namespace clipin
