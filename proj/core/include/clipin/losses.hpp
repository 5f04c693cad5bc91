#pragma once

#include <span>
#include <vector>

#include "clipin/encoder.hpp"
#include "clipin/tensor.hpp"

namespace clipin {

// Softmax temperature shared by all contrastive losses. The learnable
// parameter is log(1/tau); 1/tau is clamped to max_inverse after updates.
struct Temperature {
    double value = 0.07;
    bool learnable = true;
    double max_inverse = 100.0;

    void validate() const;
    double log_inverse() const;
    static Temperature from_log_inverse(double log_inv, bool learnable, double max_inverse = 100.0);
    void clamp();
};

struct LossWeights {
    double lambda_short = 1.0;
    double lambda_long = 0.1;
    double lambda_hn = 0.1;

    void validate() const;  // all >= 0, not all zero
};

// Index-aligned encodings of one edit-tuple batch: row i of each array comes
// from the same tuple.
struct HardBatch {
    std::vector<Embedding> src_img;
    std::vector<Embedding> tgt_img;
    std::vector<Embedding> src_txt;
    std::vector<Embedding> tgt_txt;

    std::size_t size() const { return src_img.size(); }
    void validate() const;
};

// Pairwise cosine similarities of unit embeddings (rows = a, cols = b).
// Entries are checked against [-1 - 1e-9, 1 + 1e-9].
Tensor similarity_matrix(std::span<const Embedding> a, std::span<const Embedding> b);

// ----- losses over raw similarity matrices ------------------------------
// These carry the softmax algebra; the embedding-level functions below chain
// through them. Exposed for property tests that perturb similarities.

double info_nce_from_sims(const Tensor& sims, double tau);
struct SimGrad {
    double value = 0.0;
    Tensor d_sims;
    double d_tau = 0.0;
};
SimGrad info_nce_from_sims_grad(const Tensor& sims, double tau);

double neg_cl_from_sims(const Tensor& pos_sims, const Tensor& neg_sims, double tau);
struct NegSimGrad {
    double value = 0.0;
    Tensor d_pos, d_neg;
    double d_tau = 0.0;
};
NegSimGrad neg_cl_from_sims_grad(const Tensor& pos_sims, const Tensor& neg_sims, double tau);

// Per-anchor denominator: batch positives plus the anchor's own hard negative.
double triplet_cl_from_sims(const Tensor& pos_sims, std::span<const double> own_neg_sims,
                            double tau);
NegSimGrad triplet_cl_from_sims_grad(const Tensor& pos_sims, std::span<const double> own_neg_sims,
                                     double tau);  // d_neg is [n,1]

// ----- embedding-level losses --------------------------------------------

double info_nce(std::span<const Embedding> anchors, std::span<const Embedding> candidates,
                double tau);
struct PairLossGrad {
    double value = 0.0;
    std::vector<Embedding> d_anchors, d_candidates;
    double d_tau = 0.0;
};
PairLossGrad info_nce_grad(std::span<const Embedding> anchors,
                           std::span<const Embedding> candidates, double tau);

double clip_loss(std::span<const Embedding> img, std::span<const Embedding> txt, double tau);
struct ClipLossGrad {
    double value = 0.0;
    std::vector<Embedding> d_img, d_txt;
    double d_tau = 0.0;
};
ClipLossGrad clip_loss_grad(std::span<const Embedding> img, std::span<const Embedding> txt,
                            double tau);

double neg_cl(std::span<const Embedding> anchors, std::span<const Embedding> positives,
              std::span<const Embedding> hard_negs, double tau);
struct NegClGrad {
    double value = 0.0;
    std::vector<Embedding> d_anchors, d_positives, d_negs;
    double d_tau = 0.0;
};
NegClGrad neg_cl_grad(std::span<const Embedding> anchors, std::span<const Embedding> positives,
                      std::span<const Embedding> hard_negs, double tau);

struct HardNegativeLoss {
    double total = 0.0;
    double image_side = 0.0;  // image-anchored component
    double text_side = 0.0;   // text-anchored component
};
HardNegativeLoss hard_negative_loss(const HardBatch& batch, double tau);

struct EditLossGrad {
    double value = 0.0;
    std::vector<Embedding> d_src_img, d_tgt_img, d_src_txt, d_tgt_txt;
    double d_tau = 0.0;
};
struct HardLossGrad {
    HardNegativeLoss value;
    std::vector<Embedding> d_src_img, d_tgt_img, d_src_txt, d_tgt_txt;
    double d_tau = 0.0;
};
HardLossGrad hard_negative_loss_grad(const HardBatch& batch, double tau);

// Image-anchored component only.
double negclip_baseline(const HardBatch& batch, double tau);
EditLossGrad negclip_baseline_grad(const HardBatch& batch, double tau);

// Both directions, but each anchor sees only its own hard negative.
double triplet_baseline(const HardBatch& batch, double tau);
EditLossGrad triplet_baseline_grad(const HardBatch& batch, double tau);

double distill_loss(const Embedding& teacher, const Embedding& student);
struct DistillGrad {
    double value = 0.0;
    Embedding d_teacher, d_student;
};
DistillGrad distill_loss_grad(const Embedding& teacher, const Embedding& student);

// lambda_short*short + lambda_long*long + lambda_hn*hn, evaluated literally.
double joint_objective(double short_loss, double long_loss, double hn_loss,
                       const LossWeights& w);

}  // namespace clipin
