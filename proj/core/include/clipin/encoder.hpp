#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "clipin/graph.hpp"
#include "clipin/image.hpp"
#include "clipin/positional.hpp"
#include "clipin/rng.hpp"
#include "clipin/tensor.hpp"
#include "clipin/vocab.hpp"

namespace clipin {

// Unit-norm vector in the shared space.
using Embedding = std::vector<double>;

// Throws unless | ||e|| - 1 | < 1e-9.
void check_unit_norm(const Embedding& e);

struct EncoderConfig {
    int d_model = 32;
    int n_heads = 2;
    int n_layers = 2;
    int d_ffn = 128;
    int d_embed = 16;
    int vocab_size = kVocabSize;
    int image_size = 16;
    int patch_size = 4;
    int channels = 3;

    int d_head() const { return d_model / n_heads; }
    int n_patches() const {
        const int g = image_size / patch_size;
        return g * g;
    }
    int patch_dim() const { return patch_size * patch_size * channels; }
    void validate() const;
};

// Ordered, named parameter tensors with a flat view for perturbation and
// optimizer updates. Order is fixed at construction and is the canonical
// order for checkpoints and flat gradients.
class EncoderParams {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    int index_of(const std::string& name) const;  // -1 if absent
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    int count() const { return static_cast<int>(tensors_.size()); }
    const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
    const Tensor& tensor(int i) const { return tensors_[static_cast<std::size_t>(i)]; }
    Tensor& tensor(int i) { return tensors_[static_cast<std::size_t>(i)]; }
    std::size_t offset(int i) const { return offsets_[static_cast<std::size_t>(i)]; }

    std::size_t flat_size() const;
    std::vector<double> flat() const;
    void set_flat(std::span<const double> values);
    double flat_at(std::size_t i) const;
    void flat_add(std::size_t i, double delta);

    void validate_finite() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::vector<std::size_t> offsets_;
    std::unordered_map<std::string, int> index_;
};

// Forward pass recorded on a tape. The graph borrows the encoder's parameter
// tensors, so it must not outlive the encoder.
struct TracedEncode {
    Graph graph;
    Graph::Id embedding = -1;
    std::vector<Graph::Id> param_leaves;  // aligned with EncoderParams order
};

// Runs backward from d(loss)/d(embedding) and adds d(loss)/d(params) into
// flat_grad (laid out per EncoderParams::offset).
void accumulate_param_grads(TracedEncode& traced, const EncoderParams& params,
                            const Embedding& emb_grad, std::span<double> flat_grad);

class ImageEncoder {
public:
    ImageEncoder(const EncoderConfig& cfg, std::uint64_t seed);

    Embedding encode(const ToyImage& image) const;
    TracedEncode encode_traced(const ToyImage& image) const;

    const EncoderConfig& config() const { return cfg_; }
    const EncoderParams& params() const { return params_; }
    EncoderParams& params() { return params_; }

private:
    EncoderConfig cfg_;
    EncoderParams params_;
};

class TextEncoder {
public:
    TextEncoder(const EncoderConfig& cfg, PositionalMode mode, std::uint64_t seed);

    Embedding encode(const TokenSequence& tokens) const;
    TracedEncode encode_traced(const TokenSequence& tokens) const;

    const EncoderConfig& config() const { return cfg_; }
    const PositionalMode& mode() const { return mode_; }
    const EncoderParams& params() const { return params_; }
    EncoderParams& params() { return params_; }

    // Replaces parameters wholesale (used by students and checkpoint loads).
    void set_params(EncoderParams p) { params_ = std::move(p); }

private:
    EncoderConfig cfg_;
    PositionalMode mode_;
    EncoderParams params_;
};

// Stage-1 student: the teacher's weights with the absolute position table
// dropped and query/key rotation enabled instead.
TextEncoder make_rotary_student(const TextEncoder& teacher, int student_context,
                                double base_theta = 10000.0);

// Interpolation baseline: the teacher's position table linearly stretched to
// the student context; all other weights copied.
TextEncoder make_interpolated_student(const TextEncoder& teacher, int student_context);

}  // namespace clipin
