#include "bgg/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bgg/checkpoint.hpp"

namespace bgg {

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, int num_categories, uint64_t param_seed)
    : cfg_(cfg), k_(num_categories), param_seed_(param_seed) {
    require(k_ >= 2, ErrorKind::config, "extractor requires >= 2 categories");
    require(cfg_.d_e >= 2, ErrorKind::config, "extractor embedding dim too small");
    Rng root(param_seed);
    c1_ = Conv2d<float>(reg_, root.fork("c1"), "ex.c1", 3, 3, 3, 16, 2, 1);
    c2_ = Conv2d<float>(reg_, root.fork("c2"), "ex.c2", 3, 3, 16, 32, 2, 1);
    c3_ = Conv2d<float>(reg_, root.fork("c3"), "ex.c3", 3, 3, 32, 64, 2, 1);
    fc_embed_ = Linear<float>(reg_, root.fork("fc"), "ex.fc_embed", 64, cfg_.d_e);
    head_ = Linear<float>(reg_, root.fork("head"), "ex.head", cfg_.d_e, k_);
}

TensorF FeatureExtractor::batch_tensor(const std::vector<const Image*>& imgs) const {
    require(!imgs.empty(), ErrorKind::argument, "empty image batch");
    int s = cfg_.image_size;
    TensorF t(Shape{static_cast<int>(imgs.size()), s, s, 3});
    int64_t stride = int64_t(s) * s * 3;
    for (size_t i = 0; i < imgs.size(); ++i) {
        require(imgs[i]->h == s && imgs[i]->w == s && imgs[i]->c == 3, ErrorKind::shape,
                "extractor input must be " + std::to_string(s) + "px RGB");
        std::copy_n(imgs[i]->v.data(), stride, t.data() + int64_t(i) * stride);
    }
    return t;
}

GraphF::Var FeatureExtractor::build_logits(GraphF& g, const TensorF& images, GraphF::Var* embed_out) const {
    auto x = g.input(images);
    x = g.silu(c1_.forward(g, x));
    x = g.silu(c2_.forward(g, x));
    x = g.silu(c3_.forward(g, x));
    x = g.global_avg_pool(x);
    auto emb = g.silu(fc_embed_.forward(g, x));
    if (embed_out) *embed_out = emb;
    return head_.forward(g, emb);
}

std::vector<float> FeatureExtractor::embed(const Image& background_only) const {
    GraphF g(false);
    GraphF::Var emb = -1;
    (void)build_logits(g, batch_tensor({&background_only}), &emb);
    const TensorF& e = g.val(emb);
    return std::vector<float>(e.v.begin(), e.v.end());
}

std::vector<float> FeatureExtractor::embed_masked(const Image& img, const Mask& product_mask) const {
    return embed(apply_mask(img, product_mask, 0));
}

int FeatureExtractor::classify(const Image& background_only) const {
    GraphF g(false);
    auto logits = build_logits(g, batch_tensor({&background_only}), nullptr);
    const TensorF& l = g.val(logits);
    int best = 0;
    for (int j = 1; j < k_; ++j)
        if (l[j] > l[best]) best = j;
    return best;
}

double FeatureExtractor::held_out_accuracy(const std::vector<Image>& bg_images,
                                           const std::vector<int>& labels) const {
    require(bg_images.size() == labels.size() && !bg_images.empty(), ErrorKind::argument,
            "held_out_accuracy: size mismatch");
    int correct = 0;
    for (size_t i = 0; i < bg_images.size(); ++i)
        if (classify(bg_images[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(bg_images.size());
}

float FeatureExtractor::train_step(const std::vector<const Image*>& bg_images, const std::vector<int>& labels,
                                   float lr, int adam_t, std::map<std::string, TensorF>& m,
                                   std::map<std::string, TensorF>& v) {
    GraphF g;
    auto loss = g.softmax_xent(build_logits(g, batch_tensor(bg_images), nullptr), labels);
    float lv = g.val(loss)[0];
    reg_.zero_grads();
    g.backward(loss);
    const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    float c1 = 1.f - std::pow(b1, static_cast<float>(adam_t));
    float c2 = 1.f - std::pow(b2, static_cast<float>(adam_t));
    for (Param<float>* p : reg_.all()) {
        TensorF& pm = m[p->name];
        TensorF& pv = v[p->name];
        if (pm.numel() == 0) pm = TensorF(p->value.shape);
        if (pv.numel() == 0) pv = TensorF(p->value.shape);
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            float gr = p->grad[i];
            pm[i] = b1 * pm[i] + (1.f - b1) * gr;
            pv[i] = b2 * pv[i] + (1.f - b2) * gr * gr;
            p->value[i] -= lr * (pm[i] / c1) / (std::sqrt(pv[i] / c2) + eps);
        }
    }
    return lv;
}

void FeatureExtractor::save(const std::string& path) const {
    nlohmann::json header;
    header["extractor"] = {{"d_e", cfg_.d_e},
                           {"image_size", cfg_.image_size},
                           {"num_categories", k_},
                           {"accuracy_gate", cfg_.accuracy_gate}};
    char seed_hex[32];
    std::snprintf(seed_hex, sizeof seed_hex, "%016llx", static_cast<unsigned long long>(param_seed_));
    header["param_seed"] = seed_hex;
    std::vector<std::pair<std::string, const TensorF*>> tensors;
    for (const Param<float>* p : const_cast<ParamRegistry<float>&>(reg_).all())
        tensors.emplace_back("param/" + p->name, &p->value);
    write_checkpoint(path, "extractor", std::move(header), tensors);
}

FeatureExtractor FeatureExtractor::load(const std::string& path) {
    Checkpoint ck = read_checkpoint(path);
    require(ck.header.value("kind", "") == "extractor", ErrorKind::parse,
            "not an extractor checkpoint: " + path);
    const auto& e = ck.header.at("extractor");
    ExtractorConfig cfg;
    cfg.d_e = e.at("d_e").get<int>();
    cfg.image_size = e.at("image_size").get<int>();
    cfg.accuracy_gate = e.value("accuracy_gate", 0.9f);
    uint64_t seed = std::stoull(ck.header.at("param_seed").get<std::string>(), nullptr, 16);
    FeatureExtractor ex(cfg, e.at("num_categories").get<int>(), seed);
    for (Param<float>* p : ex.reg_.all()) {
        const TensorF& t = ck.tensor("param/" + p->name);
        require(t.shape == p->value.shape, ErrorKind::parse, "extractor shape mismatch for " + p->name);
        p->value = t;
    }
    return ex;
}

FeatureExtractor train_extractor_on(const std::vector<Image>& train_bg, const std::vector<int>& train_labels,
                                    const std::vector<Image>& held_bg, const std::vector<int>& held_labels,
                                    int num_categories, const ExtractorConfig& cfg) {
    require(num_categories >= 2, ErrorKind::config, "extractor requires >= 2 categories");
    require(train_bg.size() == train_labels.size() && !train_bg.empty(), ErrorKind::argument,
            "extractor training set is empty or mismatched");
    Rng root(cfg.seed);
    FeatureExtractor ex(cfg, num_categories, root.fork("params").raw_state());

    std::map<std::string, TensorF> m, v;
    int n = static_cast<int>(train_bg.size());
    std::vector<std::vector<int>> perms;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const Image*> batch;
        std::vector<int> labels;
        for (int i = 0; i < cfg.batch; ++i) {
            int64_t pos = int64_t(step) * cfg.batch + i;
            int epoch = static_cast<int>(pos / n);
            int off = static_cast<int>(pos % n);
            while (epoch >= static_cast<int>(perms.size())) {
                std::vector<int> perm(train_bg.size());
                for (size_t k = 0; k < perm.size(); ++k) perm[k] = static_cast<int>(k);
                Rng r = root.fork("epoch:" + std::to_string(perms.size()));
                shuffle(perm, r);
                perms.push_back(std::move(perm));
            }
            int idx = perms[size_t(epoch)][size_t(off)];
            batch.push_back(&train_bg[size_t(idx)]);
            labels.push_back(train_labels[size_t(idx)]);
        }
        ex.train_step(batch, labels, cfg.lr, step + 1, m, v);
    }

    if (!held_bg.empty()) {
        double acc = ex.held_out_accuracy(held_bg, held_labels);
        require(acc >= cfg.accuracy_gate, ErrorKind::runtime,
                "extractor held-out accuracy " + std::to_string(acc) + " is below the gate " +
                    std::to_string(cfg.accuracy_gate) +
                    "; increase corpus separability/size or extractor steps");
    }
    return ex;
}

FeatureExtractor train_extractor(const DatasetManifest& manifest, const ExtractorConfig& cfg) {
    require(manifest.num_categories() >= 2, ErrorKind::config, "extractor requires >= 2 categories");
    std::vector<Image> train_bg, held_bg;
    std::vector<int> train_labels, held_labels;
    for (const auto& id : manifest.split("train")) {
        AdRecord rec = load_record(manifest, id);
        train_bg.push_back(apply_mask(rec.image, rec.mask, 0));
        train_labels.push_back(rec.category_id);
    }
    for (const auto& id : manifest.split("eval_bg1k")) {
        AdRecord rec = load_record(manifest, id);
        held_bg.push_back(apply_mask(rec.image, rec.mask, 0));
        held_labels.push_back(rec.category_id);
    }
    return train_extractor_on(train_bg, train_labels, held_bg, held_labels, manifest.num_categories(), cfg);
}

namespace {

using EMat = Eigen::MatrixXd;
using EVec = Eigen::VectorXd;

EMat psd_sqrt(const EMat& m) {
    Eigen::SelfAdjointEigenSolver<EMat> es(0.5 * (m + m.transpose()));
    EVec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void moments(const std::vector<std::vector<float>>& set, EVec& mu, EMat& cov) {
    int n = static_cast<int>(set.size());
    int d = static_cast<int>(set[0].size());
    EMat x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = static_cast<double>(set[size_t(i)][size_t(j)]);
    mu = x.colwise().mean();
    EMat centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
    cov += 1e-6 * EMat::Identity(d, d);
}

}  // namespace

double fid_from_embeddings(const std::vector<std::vector<float>>& a, const std::vector<std::vector<float>>& b) {
    require(!a.empty() && !b.empty(), ErrorKind::argument, "fid: empty embedding set");
    int d = static_cast<int>(a[0].size());
    require(static_cast<int>(a.size()) > d && static_cast<int>(b.size()) > d, ErrorKind::argument,
            "fid: each set needs more than dim(=" + std::to_string(d) + ") samples");
    for (const auto& e : a)
        require(static_cast<int>(e.size()) == d, ErrorKind::shape, "fid: inhomogeneous embedding dims");
    for (const auto& e : b)
        require(static_cast<int>(e.size()) == d, ErrorKind::shape, "fid: inhomogeneous embedding dims");

    EVec mu1, mu2;
    EMat s1, s2;
    moments(a, mu1, s1);
    moments(b, mu2, s2);

    // Tr((S1 S2)^{1/2}) via the symmetrized product sqrt(S1)^T S2 sqrt(S1).
    EMat s1h = psd_sqrt(s1);
    EMat inner = psd_sqrt(s1h * s2 * s1h);
    double tr_sqrt = inner.trace();
    double val = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, val);
}

double fid_score(const std::vector<const Image*>& set_a_bg, const std::vector<const Image*>& set_b_bg,
                 const FeatureExtractor& ex) {
    std::vector<std::vector<float>> ea, eb;
    for (const Image* img : set_a_bg) ea.push_back(ex.embed(*img));
    for (const Image* img : set_b_bg) eb.push_back(ex.embed(*img));
    return fid_from_embeddings(ea, eb);
}

double embed_similarity(const Image& a_bg, const Image& b_bg, const FeatureExtractor& ex) {
    std::vector<float> ea = ex.embed(a_bg), eb = ex.embed(b_bg);
    double na = 0, nb = 0, dot = 0;
    for (size_t i = 0; i < ea.size(); ++i) {
        na += double(ea[i]) * ea[i];
        nb += double(eb[i]) * eb[i];
        dot += double(ea[i]) * eb[i];
    }
    require(na > 0 && nb > 0, ErrorKind::degenerate, "embed_similarity: zero-norm embedding");
    return 100.0 * dot / (std::sqrt(na) * std::sqrt(nb));
}

ClusterMetrics cluster_metrics(const std::vector<std::vector<float>>& embeddings,
                               const std::vector<int>& labels) {
    require(embeddings.size() == labels.size() && !embeddings.empty(), ErrorKind::argument,
            "cluster_metrics: size mismatch");
    std::map<int, std::vector<size_t>> by_label;
    for (size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);

    ClusterMetrics out;
    std::map<int, std::vector<double>> centroids;
    size_t d = embeddings[0].size();
    for (auto& [lab, idxs] : by_label) {
        if (idxs.size() < 2) {
            out.warnings.push_back("label " + std::to_string(lab) + " has fewer than 2 points; excluded");
            continue;
        }
        std::vector<double> c(d, 0.0);
        for (size_t i : idxs)
            for (size_t j = 0; j < d; ++j) c[j] += embeddings[i][j];
        for (auto& v : c) v /= static_cast<double>(idxs.size());
        centroids[lab] = std::move(c);
    }
    require(centroids.size() >= 2, ErrorKind::argument, "cluster_metrics: need >= 2 usable labels");

    double intra = 0;
    int64_t n_pts = 0;
    for (auto& [lab, c] : centroids) {
        for (size_t i : by_label[lab]) {
            double s = 0;
            for (size_t j = 0; j < d; ++j) {
                double dd = embeddings[i][j] - c[j];
                s += dd * dd;
            }
            intra += std::sqrt(s);
            ++n_pts;
        }
    }
    out.intra_mean = intra / static_cast<double>(n_pts);

    double inter = 0;
    int n_pairs = 0;
    for (auto it1 = centroids.begin(); it1 != centroids.end(); ++it1)
        for (auto it2 = std::next(it1); it2 != centroids.end(); ++it2) {
            double s = 0;
            for (size_t j = 0; j < d; ++j) {
                double dd = it1->second[j] - it2->second[j];
                s += dd * dd;
            }
            inter += std::sqrt(s);
            ++n_pairs;
        }
    out.inter_mean = inter / static_cast<double>(n_pairs);
    require(out.inter_mean > 0, ErrorKind::degenerate, "cluster_metrics: coincident centroids");
    out.ratio = out.intra_mean / out.inter_mean;
    return out;
}

CopyPasteScore copy_paste_score(const Image& generated, const Image& reference, const Mask& mask) {
    require(generated.same_shape(reference), ErrorKind::shape, "copy_paste_score: image shapes differ");
    check_pair(generated, mask, "copy_paste_score");
    int64_t n_px = 0;
    double mse = 0;
    int64_t identical = 0;
    const float tol = 1.f / 255.f;
    for (int y = 0; y < generated.h; ++y)
        for (int x = 0; x < generated.w; ++x) {
            if (mask.at(y, x)) continue;
            ++n_px;
            bool same = true;
            for (int c = 0; c < generated.c; ++c) {
                float d = generated.at(y, x, c) - reference.at(y, x, c);
                mse += double(d) * d;
                if (std::abs(d) > tol) same = false;
            }
            if (same) ++identical;
        }
    require(n_px > 0, ErrorKind::degenerate, "copy_paste_score: empty background region");
    CopyPasteScore out;
    out.pixel_mse = mse / static_cast<double>(n_px * generated.c);
    out.identical_fraction = static_cast<double>(identical) / static_cast<double>(n_px);
    return out;
}

}  // namespace bgg
