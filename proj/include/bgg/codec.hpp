#pragma once
// Deterministic latent codec: space-to-depth by a fixed factor. Exactly
// invertible, so compositing and inpainting checks can be made bit-exact.

#include "bgg/image.hpp"
#include "bgg/tensor.hpp"

namespace bgg {

// (H,W,C) -> (H/f, W/f, C*f*f); latent channel layout groups the f*f block
// offsets per source channel: out[(dy*f+dx)*C + c].
TensorF encode_latent(const Image& img, int factor);
Image decode_latent(const TensorF& z, int factor);

// Batched variants over (N,H,W,C) tensors.
TensorF encode_latent_batch(const std::vector<Image>& imgs, int factor);

inline int latent_channels(int image_channels, int factor) { return image_channels * factor * factor; }

}  // namespace bgg
