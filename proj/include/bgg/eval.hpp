#pragma once
// Desk-scale metric stack: a locally trained background-style classifier whose
// penultimate layer provides embeddings for the Frechet-distance proxy,
// cosine similarity, cluster compactness, and a copy-and-paste detector.

#include <string>
#include <vector>

#include "bgg/dataset.hpp"
#include "bgg/nn.hpp"

namespace bgg {

struct ExtractorConfig {
    int d_e = 64;  // penultimate (embedding) dimension
    int image_size = 32;
    int steps = 600;
    int batch = 32;
    float lr = 1e-3f;
    uint64_t seed = 0;
    float accuracy_gate = 0.9f;
};

class FeatureExtractor {
public:
    FeatureExtractor(const ExtractorConfig& cfg, int num_categories, uint64_t param_seed);

    const ExtractorConfig& config() const { return cfg_; }
    int num_categories() const { return k_; }
    ParamRegistry<float>& params() { return reg_; }
    uint64_t param_seed() const { return param_seed_; }

    // Inputs are background-only images (product region zeroed by the caller
    // or via embed_masked).
    std::vector<float> embed(const Image& background_only) const;
    std::vector<float> embed_masked(const Image& img, const Mask& product_mask) const;
    int classify(const Image& background_only) const;

    double held_out_accuracy(const std::vector<Image>& bg_images, const std::vector<int>& labels) const;

    void save(const std::string& path) const;
    static FeatureExtractor load(const std::string& path);

    // one optimization pass used by train_extractor
    float train_step(const std::vector<const Image*>& bg_images, const std::vector<int>& labels, float lr,
                     int adam_t, std::map<std::string, TensorF>& m, std::map<std::string, TensorF>& v);

private:
    ExtractorConfig cfg_;
    int k_ = 0;
    uint64_t param_seed_ = 0;
    ParamRegistry<float> reg_;
    Conv2d<float> c1_, c2_, c3_;
    Linear<float> fc_embed_, head_;

    GraphF::Var build_logits(GraphF& g, const TensorF& images, GraphF::Var* embed_out) const;
    TensorF batch_tensor(const std::vector<const Image*>& imgs) const;
};

// Trains on background-only train-split images and enforces the accuracy gate
// on the held-out split.
FeatureExtractor train_extractor(const DatasetManifest& manifest, const ExtractorConfig& cfg);

// Lower-level variant for constructed corpora (exercised by the
// shuffled-label gate test).
FeatureExtractor train_extractor_on(const std::vector<Image>& train_bg, const std::vector<int>& train_labels,
                                    const std::vector<Image>& held_bg, const std::vector<int>& held_labels,
                                    int num_categories, const ExtractorConfig& cfg);

// Frechet distance between gaussians fitted to two embedding sets
// (covariance regularized by 1e-6 I; sets must have > dim samples).
double fid_from_embeddings(const std::vector<std::vector<float>>& a, const std::vector<std::vector<float>>& b);

double fid_score(const std::vector<const Image*>& set_a_bg, const std::vector<const Image*>& set_b_bg,
                 const FeatureExtractor& ex);

// 100 * cosine similarity of embeddings; throws on zero-norm embeddings.
double embed_similarity(const Image& a_bg, const Image& b_bg, const FeatureExtractor& ex);

struct ClusterMetrics {
    double intra_mean = 0;
    double inter_mean = 0;
    double ratio = 0;
    std::vector<std::string> warnings;
};

ClusterMetrics cluster_metrics(const std::vector<std::vector<float>>& embeddings, const std::vector<int>& labels);

struct CopyPasteScore {
    double pixel_mse = 0;
    double identical_fraction = 0;
};

// Compared on the mask==0 region only; identical = all channels within 1/255.
CopyPasteScore copy_paste_score(const Image& generated, const Image& reference, const Mask& mask);

}  // namespace bgg
