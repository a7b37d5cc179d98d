#include "bgg/codec.hpp"

namespace bgg {

TensorF encode_latent(const Image& img, int factor) {
    require(factor >= 1, ErrorKind::config, "codec factor must be >= 1");
    require(img.h % factor == 0 && img.w % factor == 0, ErrorKind::config,
            "image size not divisible by codec factor");
    int hl = img.h / factor, wl = img.w / factor, cl = img.c * factor * factor;
    TensorF z(Shape{hl, wl, cl});
    for (int y = 0; y < hl; ++y)
        for (int x = 0; x < wl; ++x)
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx)
                    for (int ch = 0; ch < img.c; ++ch)
                        z[(int64_t(y) * wl + x) * cl + (dy * factor + dx) * img.c + ch] =
                            img.at(y * factor + dy, x * factor + dx, ch);
    return z;
}

Image decode_latent(const TensorF& z, int factor) {
    require(z.rank() == 3, ErrorKind::shape, "decode_latent: latent must be 3-D");
    int hl = z.dim(0), wl = z.dim(1), cl = z.dim(2);
    require(cl % (factor * factor) == 0, ErrorKind::config, "latent channels inconsistent with codec factor");
    int c = cl / (factor * factor);
    Image img(hl * factor, wl * factor, c);
    for (int y = 0; y < hl; ++y)
        for (int x = 0; x < wl; ++x)
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx)
                    for (int ch = 0; ch < c; ++ch)
                        img.at(y * factor + dy, x * factor + dx, ch) =
                            z[(int64_t(y) * wl + x) * cl + (dy * factor + dx) * c + ch];
    return img;
}

TensorF encode_latent_batch(const std::vector<Image>& imgs, int factor) {
    require(!imgs.empty(), ErrorKind::argument, "encode_latent_batch: empty batch");
    TensorF first = encode_latent(imgs[0], factor);
    Shape s = first.shape;
    TensorF out(Shape{static_cast<int>(imgs.size()), s[0], s[1], s[2]});
    int64_t stride = first.numel();
    std::copy_n(first.data(), stride, out.data());
    for (size_t i = 1; i < imgs.size(); ++i) {
        TensorF zi = encode_latent(imgs[i], factor);
        require(zi.shape == s, ErrorKind::shape, "encode_latent_batch: inhomogeneous image shapes");
        std::copy_n(zi.data(), stride, out.data() + int64_t(i) * stride);
    }
    return out;
}

}  // namespace bgg
