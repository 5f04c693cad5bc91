#include "clipin/encoder.hpp"

#include <cmath>

#include "clipin/error.hpp"

namespace clipin {

void check_unit_norm(const Embedding& e) {
    const double n = l2_norm(e);
    if (std::abs(n - 1.0) >= 1e-9) throw Error("embedding is not unit-norm");
}

void EncoderConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ffn < 1 || d_embed < 1 || vocab_size < 1)
        throw ConfigError("encoder dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (d_head() % 2 != 0) throw ConfigError("head width must be even for rotation");
    if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0)
        throw ConfigError("image size must be a multiple of patch size");
    if (channels != 3) throw ConfigError("images are 3-channel");
}

void EncoderParams::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, count());
    offsets_.push_back(flat_size());
    names_.push_back(name);
    tensors_.push_back(std::move(t));
}

bool EncoderParams::has(const std::string& name) const { return index_.count(name) != 0; }

int EncoderParams::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

const Tensor& EncoderParams::get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return tensors_[static_cast<std::size_t>(it->second)];
}

Tensor& EncoderParams::get(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return tensors_[static_cast<std::size_t>(it->second)];
}

std::size_t EncoderParams::flat_size() const {
    if (tensors_.empty()) return 0;
    return offsets_.back() + tensors_.back().size();
}

std::vector<double> EncoderParams::flat() const {
    std::vector<double> out;
    out.reserve(flat_size());
    for (const Tensor& t : tensors_) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

void EncoderParams::set_flat(std::span<const double> values) {
    if (values.size() != flat_size()) throw ConfigError("flat parameter size mismatch");
    std::size_t pos = 0;
    for (Tensor& t : tensors_) {
        auto dst = t.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = values[pos++];
    }
}

double EncoderParams::flat_at(std::size_t i) const {
    for (std::size_t k = 0; k < tensors_.size(); ++k) {
        const std::size_t off = offsets_[k];
        if (i < off + tensors_[k].size()) return tensors_[k][i - off];
    }
    throw ConfigError("flat index out of range");
}

void EncoderParams::flat_add(std::size_t i, double delta) {
    for (std::size_t k = 0; k < tensors_.size(); ++k) {
        const std::size_t off = offsets_[k];
        if (i < off + tensors_[k].size()) {
            tensors_[k][i - off] += delta;
            return;
        }
    }
    throw ConfigError("flat index out of range");
}

void EncoderParams::validate_finite() const {
    for (std::size_t k = 0; k < tensors_.size(); ++k)
        if (!tensors_[k].all_finite())
            throw Error("non-finite values in parameter " + names_[k]);
}

namespace {

Tensor gaussian(Rng& rng, std::vector<int> shape, double scale) {
    Tensor t(std::move(shape));
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.normal() * scale;
    return t;
}

Tensor ones(std::vector<int> shape) {
    Tensor t(std::move(shape));
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0;
    return t;
}

constexpr double kInitScale = 0.02;
constexpr double kLnEps = 1e-5;

void append_body_params(EncoderParams& p, const EncoderConfig& cfg, Rng& rng) {
    const int d = cfg.d_model;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        p.add(pre + "ln1.g", ones({d}));
        p.add(pre + "ln1.b", Tensor({d}));
        p.add(pre + "attn.wq", gaussian(rng, {d, d}, kInitScale));
        p.add(pre + "attn.bq", Tensor({d}));
        p.add(pre + "attn.wk", gaussian(rng, {d, d}, kInitScale));
        p.add(pre + "attn.bk", Tensor({d}));
        p.add(pre + "attn.wv", gaussian(rng, {d, d}, kInitScale));
        p.add(pre + "attn.bv", Tensor({d}));
        p.add(pre + "attn.wo", gaussian(rng, {d, d}, kInitScale));
        p.add(pre + "attn.bo", Tensor({d}));
        p.add(pre + "ln2.g", ones({d}));
        p.add(pre + "ln2.b", Tensor({d}));
        p.add(pre + "ffn.w1", gaussian(rng, {d, cfg.d_ffn}, kInitScale));
        p.add(pre + "ffn.b1", Tensor({cfg.d_ffn}));
        p.add(pre + "ffn.w2", gaussian(rng, {cfg.d_ffn, d}, kInitScale));
        p.add(pre + "ffn.b2", Tensor({d}));
    }
    p.add("ln_f.g", ones({d}));
    p.add("ln_f.b", Tensor({d}));
    p.add("proj.w", gaussian(rng, {d, cfg.d_embed}, kInitScale));
    p.add("proj.b", Tensor({cfg.d_embed}));
}

struct LeafTable {
    std::vector<Graph::Id> leaves;  // aligned with EncoderParams order
    const EncoderParams* params;

    Graph::Id operator()(const std::string& name) const {
        const int i = params->index_of(name);
        if (i < 0) throw ConfigError("unknown parameter: " + name);
        return leaves[static_cast<std::size_t>(i)];
    }
};

LeafTable register_leaves(Graph& g, const EncoderParams& params, bool with_grad) {
    LeafTable t;
    t.params = &params;
    t.leaves.reserve(static_cast<std::size_t>(params.count()));
    for (int i = 0; i < params.count(); ++i)
        t.leaves.push_back(g.leaf_ref(&params.tensor(i), with_grad));
    return t;
}

// Pre-norm transformer body over x [T, d_model]; returns the unit-norm
// projection output. Rotation is applied to queries and keys only.
Graph::Id run_body(Graph& g, Graph::Id x, const EncoderConfig& cfg, const LeafTable& leaf,
                   const std::vector<int>& positions, const RotaryPos* rope) {
    const int hd = cfg.d_head();
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        const Graph::Id h = g.layer_norm(x, leaf(pre + "ln1.g"), leaf(pre + "ln1.b"), kLnEps);
        const Graph::Id q = g.add_rowvec(g.matmul(h, leaf(pre + "attn.wq")), leaf(pre + "attn.bq"));
        const Graph::Id k = g.add_rowvec(g.matmul(h, leaf(pre + "attn.wk")), leaf(pre + "attn.bk"));
        const Graph::Id v = g.add_rowvec(g.matmul(h, leaf(pre + "attn.wv")), leaf(pre + "attn.bv"));
        std::vector<Graph::Id> heads;
        heads.reserve(static_cast<std::size_t>(cfg.n_heads));
        for (int hh = 0; hh < cfg.n_heads; ++hh) {
            Graph::Id qh = g.slice_cols(q, hh * hd, hd);
            Graph::Id kh = g.slice_cols(k, hh * hd, hd);
            const Graph::Id vh = g.slice_cols(v, hh * hd, hd);
            if (rope) {
                qh = g.rotary(qh, positions, rope->base_theta);
                kh = g.rotary(kh, positions, rope->base_theta);
            }
            const Graph::Id scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_hd);
            const Graph::Id attn = g.softmax_rows(scores);
            heads.push_back(g.matmul(attn, vh));
        }
        const Graph::Id merged = g.concat_cols(heads);
        const Graph::Id o = g.add_rowvec(g.matmul(merged, leaf(pre + "attn.wo")), leaf(pre + "attn.bo"));
        x = g.add(x, o);
        const Graph::Id h2 = g.layer_norm(x, leaf(pre + "ln2.g"), leaf(pre + "ln2.b"), kLnEps);
        const Graph::Id f1 = g.gelu(g.add_rowvec(g.matmul(h2, leaf(pre + "ffn.w1")), leaf(pre + "ffn.b1")));
        const Graph::Id f2 = g.add_rowvec(g.matmul(f1, leaf(pre + "ffn.w2")), leaf(pre + "ffn.b2"));
        x = g.add(x, f2);
    }
    const Graph::Id hf = g.layer_norm(x, leaf("ln_f.g"), leaf("ln_f.b"), kLnEps);
    const Graph::Id pooled = g.mean_rows(hf);
    const Graph::Id proj = g.add_rowvec(g.matmul(pooled, leaf("proj.w")), leaf("proj.b"));
    return g.l2_normalize(proj);
}

Embedding embedding_of(const Graph& g, Graph::Id id) {
    const Tensor& t = g.value(id);
    Embedding e(t.data().begin(), t.data().end());
    check_unit_norm(e);
    return e;
}

Tensor image_patches(const ToyImage& image, const EncoderConfig& cfg) {
    image.validate();
    if (image.height != image.width) throw ConfigError("images must be square");
    if (image.height % cfg.patch_size != 0)
        throw ConfigError("image size is not a multiple of the patch size");
    const int grid = image.height / cfg.patch_size;
    if (grid * grid != cfg.n_patches())
        throw ConfigError("image patch grid does not match the encoder configuration");
    Tensor patches({cfg.n_patches(), cfg.patch_dim()});
    for (int py = 0; py < grid; ++py) {
        for (int px = 0; px < grid; ++px) {
            const int row = py * grid + px;
            int col = 0;
            for (int y = 0; y < cfg.patch_size; ++y)
                for (int x = 0; x < cfg.patch_size; ++x)
                    for (int c = 0; c < cfg.channels; ++c)
                        patches(row, col++) =
                            image.at(py * cfg.patch_size + y, px * cfg.patch_size + x, c);
        }
    }
    return patches;
}

std::vector<int> iota_positions(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    return p;
}

}  // namespace

void accumulate_param_grads(TracedEncode& traced, const EncoderParams& params,
                            const Embedding& emb_grad, std::span<double> flat_grad) {
    const Tensor& emb = traced.graph.value(traced.embedding);
    if (emb_grad.size() != emb.size()) throw ConfigError("embedding gradient size mismatch");
    Tensor seed(emb.shape());
    for (std::size_t i = 0; i < emb_grad.size(); ++i) seed[i] = emb_grad[i];
    traced.graph.backward(traced.embedding, seed);
    if (flat_grad.size() != params.flat_size()) throw ConfigError("flat gradient size mismatch");
    for (int i = 0; i < params.count(); ++i) {
        const Tensor g = traced.graph.grad(traced.param_leaves[static_cast<std::size_t>(i)]);
        const std::size_t off = params.offset(i);
        for (std::size_t j = 0; j < g.size(); ++j) flat_grad[off + j] += g[j];
    }
}

ImageEncoder::ImageEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    params_.add("patch.w", gaussian(rng, {cfg_.patch_dim(), cfg_.d_model}, kInitScale));
    params_.add("patch.b", Tensor({cfg_.d_model}));
    params_.add("pos", gaussian(rng, {cfg_.n_patches(), cfg_.d_model}, kInitScale));
    append_body_params(params_, cfg_, rng);
}

namespace {

TracedEncode image_forward(const ImageEncoder& enc, const ToyImage& image, bool with_grad) {
    const EncoderConfig& cfg = enc.config();
    TracedEncode te;
    Graph& g = te.graph;
    const LeafTable leaf = register_leaves(g, enc.params(), with_grad);
    te.param_leaves = leaf.leaves;
    const Graph::Id patches = g.leaf(image_patches(image, cfg), false);
    Graph::Id x = g.add_rowvec(g.matmul(patches, leaf("patch.w")), leaf("patch.b"));
    const std::vector<int> positions = iota_positions(cfg.n_patches());
    x = g.add(x, g.rows_lookup(leaf("pos"), positions));
    te.embedding = run_body(g, x, cfg, leaf, positions, nullptr);
    return te;
}

TracedEncode text_forward(const TextEncoder& enc, const TokenSequence& tokens, bool with_grad) {
    const EncoderConfig& cfg = enc.config();
    tokens.validate();
    for (int id : tokens.ids)
        if (id >= cfg.vocab_size) throw ConfigError("token id exceeds the encoder vocabulary");
    const PositionalMode& mode = enc.mode();
    if (enforces_context_limit(mode) && tokens.length() > context_limit(mode))
        throw SequenceLengthError("sequence length " + std::to_string(tokens.length()) +
                                  " exceeds the context limit " +
                                  std::to_string(context_limit(mode)));

    TracedEncode te;
    Graph& g = te.graph;
    const LeafTable leaf = register_leaves(g, enc.params(), with_grad);
    te.param_leaves = leaf.leaves;
    const std::vector<int> positions = iota_positions(tokens.length());
    Graph::Id x = g.rows_lookup(leaf("tok"), tokens.ids);
    const RotaryPos* rope = std::get_if<RotaryPos>(&mode);
    if (!rope) x = g.add(x, g.rows_lookup(leaf("pos"), positions));
    te.embedding = run_body(g, x, cfg, leaf, positions, rope);
    return te;
}

}  // namespace

Embedding ImageEncoder::encode(const ToyImage& image) const {
    TracedEncode te = image_forward(*this, image, false);
    return embedding_of(te.graph, te.embedding);
}

TracedEncode ImageEncoder::encode_traced(const ToyImage& image) const {
    return image_forward(*this, image, true);
}

TextEncoder::TextEncoder(const EncoderConfig& cfg, PositionalMode mode, std::uint64_t seed)
    : cfg_(cfg), mode_(std::move(mode)) {
    cfg_.validate();
    validate(mode_);
    Rng rng(seed);
    params_.add("tok", gaussian(rng, {cfg_.vocab_size, cfg_.d_model}, kInitScale));
    if (const auto* abs = std::get_if<AbsolutePos>(&mode_)) {
        params_.add("pos", gaussian(rng, {abs->max_len, cfg_.d_model}, kInitScale));
    } else if (const auto* ip = std::get_if<InterpolatedPos>(&mode_)) {
        const Tensor original = gaussian(rng, {ip->original_len, cfg_.d_model}, kInitScale);
        params_.add("pos", interpolate_absolute(original, ip->stretched_len));
    }
    append_body_params(params_, cfg_, rng);
}

Embedding TextEncoder::encode(const TokenSequence& tokens) const {
    TracedEncode te = text_forward(*this, tokens, false);
    return embedding_of(te.graph, te.embedding);
}

TracedEncode TextEncoder::encode_traced(const TokenSequence& tokens) const {
    return text_forward(*this, tokens, true);
}

TextEncoder make_rotary_student(const TextEncoder& teacher, int student_context,
                                double base_theta) {
    TextEncoder student(teacher.config(), RotaryPos{base_theta, student_context}, 0);
    EncoderParams p;
    const EncoderParams& tp = teacher.params();
    for (int i = 0; i < tp.count(); ++i) {
        if (tp.name(i) == "pos") continue;
        p.add(tp.name(i), tp.tensor(i));
    }
    student.set_params(std::move(p));
    return student;
}

TextEncoder make_interpolated_student(const TextEncoder& teacher, int student_context) {
    const auto* abs = std::get_if<AbsolutePos>(&teacher.mode());
    if (!abs) throw ConfigError("interpolated student requires an absolute-table teacher");
    TextEncoder student(teacher.config(),
                        InterpolatedPos{abs->max_len, student_context}, 0);
    EncoderParams p;
    const EncoderParams& tp = teacher.params();
    for (int i = 0; i < tp.count(); ++i) {
        if (tp.name(i) == "pos") {
            p.add("pos", interpolate_absolute(tp.tensor(i), student_context));
        } else {
            p.add(tp.name(i), tp.tensor(i));
        }
    }
    student.set_params(std::move(p));
    return student;
}

}  // namespace clipin
