#include "mgreid/text_encoder.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mgreid::text {

namespace {

// BOS, EOS, then the template words.
const std::vector<std::string>& vocab_words() {
    static const std::vector<std::string> words = {
        "<bos>", "<eos>", "a", "photo", "of", "person", "head", "upper", "body", "legs"};
    return words;
}

int word_id(const std::string& w) {
    const auto& words = vocab_words();
    for (size_t i = 0; i < words.size(); ++i)
        if (words[i] == w) return static_cast<int>(i);
    throw std::logic_error("unknown template word: " + w);
}

// Template word sequences around the prompt block.
std::pair<std::vector<std::string>, std::vector<std::string>> template_words(Gran g) {
    switch (g) {
        case Gran::global: return {{"a", "photo", "of", "a"}, {"person"}};
        case Gran::head: return {{"a", "photo", "of", "a"}, {"head", "of", "a", "person"}};
        case Gran::upper:
            return {{"a", "photo", "of", "a"}, {"upper", "body", "of", "a", "person"}};
        case Gran::legs: return {{"a", "photo", "of"}, {"legs", "of", "a", "person"}};
    }
    throw std::logic_error("bad granularity");
}

}  // namespace

const char* gran_name(Gran g) {
    switch (g) {
        case Gran::global: return "global";
        case Gran::head: return "head";
        case Gran::upper: return "upper";
        case Gran::legs: return "legs";
    }
    throw std::logic_error("bad granularity");
}

Gran gran_from_name(const std::string& name) {
    for (Gran g : kGrans)
        if (name == gran_name(g)) return g;
    throw std::invalid_argument("unknown granularity: " + name);
}

// ---------------------------------------------------------------------------

PromptSet PromptSet::init(int num_ids, int num_prompts, int dim, double stddev, Rng& rng) {
    PromptSet ps;
    ps.num_ids = num_ids;
    ps.num_prompts = num_prompts;
    ps.dim = dim;
    ps.blocks.resize(static_cast<size_t>(4) * num_ids);
    for (auto& b : ps.blocks) {
        b.init(num_prompts, dim);
        for (double& x : b.w.v) x = rng.normal(0.0, stddev);
    }
    return ps;
}

nn::Param& PromptSet::block(Gran g, int id) {
    return blocks.at(static_cast<size_t>(g) * num_ids + id);
}

const nn::Param& PromptSet::block(Gran g, int id) const {
    return blocks.at(static_cast<size_t>(g) * num_ids + id);
}

void PromptSet::visit(const std::string& prefix, const nn::ParamVisitor& v) {
    for (Gran g : kGrans)
        for (int id = 0; id < num_ids; ++id)
            v(prefix + "." + gran_name(g) + "." + std::to_string(id), block(g, id));
}

void PromptSet::visit_id(const std::string& prefix, int id, const nn::ParamVisitor& v) {
    for (Gran g : kGrans)
        v(prefix + "." + gran_name(g) + "." + std::to_string(id), block(g, id));
}

// ---------------------------------------------------------------------------

TextEncoder TextEncoder::init(int width, int out_dim, int num_prompts, uint64_t seed) {
    if (width % 2 != 0) throw std::invalid_argument("TextEncoder: width must be even");
    TextEncoder te;
    te.width_ = width;
    te.out_dim_ = out_dim;
    te.num_prompts_ = num_prompts;
    te.vocab_ = static_cast<int>(vocab_words().size());
    te.max_len_ = num_prompts + 11;  // longest template

    Rng rng(seed);
    te.tok_emb_.init(te.vocab_, width);
    for (double& x : te.tok_emb_.w.v) x = rng.normal(0.0, 0.02);
    te.pos_emb_.init(te.max_len_, width);
    for (double& x : te.pos_emb_.w.v) x = rng.normal(0.0, 0.02);
    te.layers_.resize(2);
    for (auto& l : te.layers_) l.init(width, 2, 2 * width, rng);
    te.ln_final_.init(width);
    te.proj_.init(width, out_dim, rng, /*bias=*/false);
    te.set_trainable(false);  // the text tower is always frozen
    return te;
}

void TextEncoder::set_trainable(bool t) {
    visit("", [t](const std::string&, nn::Param& p) { p.trainable = t; });
}

Description TextEncoder::describe(Gran g) const {
    auto [pre, post] = template_words(g);
    Description d;
    d.tokens.push_back(word_id("<bos>"));
    d.prompt_slot.push_back(-1);
    for (const auto& w : pre) {
        d.tokens.push_back(word_id(w));
        d.prompt_slot.push_back(-1);
    }
    for (int n = 0; n < num_prompts_; ++n) {
        d.tokens.push_back(-1);
        d.prompt_slot.push_back(n);
    }
    for (const auto& w : post) {
        d.tokens.push_back(word_id(w));
        d.prompt_slot.push_back(-1);
    }
    d.tokens.push_back(word_id("<eos>"));
    d.prompt_slot.push_back(-1);
    d.eos_pos = static_cast<int>(d.tokens.size()) - 1;
    if (static_cast<int>(d.tokens.size()) > max_len_)
        throw std::logic_error("description exceeds positional table");
    return d;
}

std::string TextEncoder::template_string(Gran g) const {
    auto [pre, post] = template_words(g);
    std::ostringstream os;
    for (const auto& w : pre) os << w << " ";
    os << "[P]x" << num_prompts_;
    for (const auto& w : post) os << " " << w;
    return os.str();
}

Vec TextEncoder::encode_one(const Description& desc, const Matrix& prompts, GranCtx* ctx) const {
    if (prompts.rows != num_prompts_ || prompts.cols != width_)
        throw std::invalid_argument("encode_one: prompt block shape mismatch");
    const int n = static_cast<int>(desc.tokens.size());
    Matrix x(n, width_);
    for (int i = 0; i < n; ++i) {
        const double* src = desc.prompt_slot[i] >= 0 ? prompts.row(desc.prompt_slot[i])
                                                     : tok_emb_.w.row(desc.tokens[i]);
        for (int c = 0; c < width_; ++c) x(i, c) = src[c] + pos_emb_.w(i, c);
    }
    if (ctx) {
        ctx->x0 = x;
        ctx->layers.resize(layers_.size());
        ctx->desc = desc;
    }
    for (size_t l = 0; l < layers_.size(); ++l)
        x = layers_[l].forward(x, nullptr, ctx ? &ctx->layers[l] : nullptr);

    Matrix eos(1, width_);
    for (int c = 0; c < width_; ++c) eos(0, c) = x(desc.eos_pos, c);
    Matrix h = ln_final_.forward(eos, ctx ? &ctx->lnf : nullptr);
    Matrix e = proj_.forward(h, ctx ? &ctx->proj : nullptr);
    return e.row_vec(0);
}

void TextEncoder::backward_one(const GranCtx& ctx, const Vec& de, Matrix& dprompts) const {
    Matrix dy(1, out_dim_);
    dy.set_row(0, de);
    // proj and ln are frozen; const_cast is fine because accum() is a no-op on
    // frozen params and backward() itself has no other state.
    auto& self = const_cast<TextEncoder&>(*this);
    Matrix dh = self.proj_.backward(ctx.proj, dy);
    Matrix deos = self.ln_final_.backward(ctx.lnf, dh);

    const int n = static_cast<int>(ctx.desc.tokens.size());
    Matrix dx(n, width_, 0.0);
    for (int c = 0; c < width_; ++c) dx(ctx.desc.eos_pos, c) = deos(0, c);
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l)
        dx = self.layers_[l].backward(ctx.layers[l], dx);

    for (int i = 0; i < n; ++i)
        if (ctx.desc.prompt_slot[i] >= 0)
            for (int c = 0; c < width_; ++c) dprompts(ctx.desc.prompt_slot[i], c) += dx(i, c);
}

Vec TextEncoder::encode(const PromptSet& prompts, int id, const std::vector<Gran>& grans,
                        Ctx* ctx) const {
    if (grans.empty()) throw std::invalid_argument("encode: no granularities selected");
    Vec fused(out_dim_, 0.0);
    if (ctx) {
        ctx->grans = grans;
        ctx->per_gran.resize(grans.size());
    }
    for (size_t gi = 0; gi < grans.size(); ++gi) {
        Vec e = encode_one(describe(grans[gi]), prompts.block(grans[gi], id).w,
                           ctx ? &ctx->per_gran[gi] : nullptr);
        fused = fused + e;
    }
    for (double& v : fused) v /= static_cast<double>(grans.size());
    const double nrm = norm2(fused);
    if (ctx) {
        ctx->fused = fused;
        ctx->norm = nrm;
    }
    return normalized(fused);
}

void TextEncoder::backward(const Ctx& ctx, const Vec& dt, PromptSet& prompts, int id) const {
    // t = f / |f|  =>  df = (dt - t (t . dt)) / |f|
    Vec t = normalized(ctx.fused);
    const double proj = dot(t, dt);
    Vec df(out_dim_);
    for (int i = 0; i < out_dim_; ++i) df[i] = (dt[i] - t[i] * proj) / ctx.norm;
    const double inv_g = 1.0 / static_cast<double>(ctx.grans.size());
    for (double& v : df) v *= inv_g;

    for (size_t gi = 0; gi < ctx.grans.size(); ++gi) {
        nn::Param& block = prompts.block(ctx.grans[gi], id);
        if (!block.trainable) continue;
        backward_one(ctx.per_gran[gi], df, block.g);
    }
}

void TextEncoder::visit(const std::string& prefix, const nn::ParamVisitor& v) {
    v(prefix + ".tok", tok_emb_);
    v(prefix + ".pos", pos_emb_);
    for (size_t l = 0; l < layers_.size(); ++l)
        layers_[l].visit(prefix + ".l" + std::to_string(l), v);
    ln_final_.visit(prefix + ".lnf", v);
    proj_.visit(prefix + ".proj", v);
}

}  // namespace mgreid::text
