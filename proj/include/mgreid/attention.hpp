#pragma once

#include <limits>
#include <vector>

#include "mgreid/matrix.hpp"

// Masked scaled dot-product attention primitives. These are pure matrix ops
// with no parameters; the layers in nn.hpp and am_msa.hpp build on them.
namespace mgreid::ammsa {

// Additive score for a gated-off key. Most negative finite double; attention
// weights at these positions are forced to exactly zero after the softmax.
inline constexpr double kMaskOff = std::numeric_limits<double>::lowest();

// Token order inside the encoder sequence: one global token, the patch
// tokens, then the three part tokens.
struct SeqLayout {
    int n_patch = 0;

    int seq_len() const { return n_patch + 4; }
    int global_index() const { return 0; }
    int patch_begin() const { return 1; }
    int patch_end() const { return 1 + n_patch; }
    int local_index(int part) const { return 1 + n_patch + part; }
    int num_locals() const { return 3; }
};

// probs -> additive mask: entries strictly above the threshold stay open (0),
// everything else is gated off.
Matrix mask_gate(const Matrix& probs, double threshold);

// Binary part/patch matrix -> additive mask (1 -> open, 0 -> off).
Matrix gate_from_binary(const Matrix& g);

// Embed a 3 x n_patch additive mask into the full S x S attention mask:
// part-token rows restrict attention over patch columns, everything else
// stays open.
Matrix pad_attention_mask(const Matrix& a, const SeqLayout& layout);

struct AttnCtx {
    Matrix q, k, v;
    Matrix p;  // post-softmax weights, exact zeros at gated positions
    double scale = 1.0;
    Matrix mask;  // empty when unmasked
    bool has_mask = false;
};

// q: Sq x dh, k/v: Sk x dh, mask: Sq x Sk additive (entries 0 or kMaskOff) or
// nullptr. Rows whose keys are all gated off produce an all-zero output row.
Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const Matrix* mask, AttnCtx* ctx = nullptr);
void masked_attention_backward(const AttnCtx& ctx, const Matrix& dout,
                               Matrix& dq, Matrix& dk, Matrix& dv);

// Multi-head wrapper over masked_attention; splits columns into equal head
// slices. The same additive mask applies to every head.
struct MsaCoreCtx {
    std::vector<AttnCtx> heads;
};

Matrix masked_msa(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                  const Matrix* mask, MsaCoreCtx* ctx = nullptr);
void masked_msa_backward(const MsaCoreCtx& ctx, const Matrix& dout,
                         Matrix& dq, Matrix& dk, Matrix& dv);

}  // namespace mgreid::ammsa
