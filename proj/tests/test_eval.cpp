#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>

#include "bgg/dataset.hpp"
#include "bgg/eval.hpp"

using namespace bgg;
namespace fs = std::filesystem;

namespace {

// Point set with exact sample mean mu and exact sample covariance L*L^T
// (n-1 normalization): mu +- a*L*e_i over all axes, a^2 = (2d-1)/2.
std::vector<std::vector<float>> exact_moment_set(const Eigen::VectorXd& mu, const Eigen::MatrixXd& L) {
    int d = static_cast<int>(mu.size());
    double a = std::sqrt((2.0 * d - 1.0) / 2.0);
    std::vector<std::vector<float>> out;
    for (int i = 0; i < d; ++i) {
        Eigen::VectorXd col = a * L.col(i);
        for (int sgn : {+1, -1}) {
            Eigen::VectorXd p = mu + sgn * col;
            std::vector<float> row(static_cast<size_t>(d));
            for (int j = 0; j < d; ++j) row[size_t(j)] = static_cast<float>(p[j]);
            out.push_back(std::move(row));
        }
    }
    return out;
}

Image random_image(int size, uint64_t seed) {
    Rng rng(seed);
    Image img(size, size, 3);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST_CASE("fid matches the closed-form gaussian Frechet distance") {
    const int d = 4;
    Eigen::VectorXd mu1(d), mu2(d);
    mu1 << 0.3, -0.7, 1.1, 0.0;
    mu2 << -0.2, 0.4, 0.9, 1.5;
    Eigen::VectorXd s1(d), s2(d);
    s1 << 0.8, 1.3, 0.5, 2.0;
    s2 << 1.1, 0.6, 1.7, 0.9;

    auto set1 = exact_moment_set(mu1, s1.cwiseSqrt().asDiagonal());
    auto set2 = exact_moment_set(mu2, s2.cwiseSqrt().asDiagonal());

    // diagonal closed form, accounting for the 1e-6 ridge the metric adds
    double expect = (mu1 - mu2).squaredNorm();
    for (int i = 0; i < d; ++i) {
        double a = s1[i] + 1e-6, b = s2[i] + 1e-6;
        expect += a + b - 2.0 * std::sqrt(a * b);
    }
    double got = fid_from_embeddings(set1, set2);
    CHECK(std::abs(got - expect) / expect <= 1e-4);

    SUBCASE("invariant under a common rotation") {
        Eigen::MatrixXd rnd = Eigen::MatrixXd::Random(d, d);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(rnd);
        Eigen::MatrixXd q = qr.householderQ();
        auto rot = [&](const std::vector<std::vector<float>>& set) {
            std::vector<std::vector<float>> out;
            for (const auto& row : set) {
                Eigen::VectorXd v(d);
                for (int j = 0; j < d; ++j) v[j] = row[size_t(j)];
                Eigen::VectorXd w = q * v;
                std::vector<float> r(static_cast<size_t>(d));
                for (int j = 0; j < d; ++j) r[size_t(j)] = static_cast<float>(w[j]);
                out.push_back(std::move(r));
            }
            return out;
        };
        double got_rot = fid_from_embeddings(rot(set1), rot(set2));
        CHECK(std::abs(got_rot - expect) / expect <= 1e-3);
    }

    SUBCASE("identical sets give zero and arguments commute") {
        CHECK(fid_from_embeddings(set1, set1) <= 1e-6);
        double ab = fid_from_embeddings(set1, set2);
        double ba = fid_from_embeddings(set2, set1);
        CHECK(std::abs(ab - ba) <= 1e-6);
    }

    SUBCASE("undersized sets are rejected") {
        std::vector<std::vector<float>> tiny(set1.begin(), set1.begin() + d);
        CHECK_THROWS_AS(fid_from_embeddings(tiny, set2), Error);
    }
}

TEST_CASE("cluster metrics") {
    SUBCASE("identical points per label give ratio 0") {
        std::vector<std::vector<float>> e = {{1, 0}, {1, 0}, {5, 5}, {5, 5}};
        std::vector<int> labels = {0, 0, 1, 1};
        auto m = cluster_metrics(e, labels);
        CHECK(m.intra_mean == 0.0);
        CHECK(m.ratio == 0.0);
    }

    SUBCASE("hand-computed two-label construction") {
        // label 0: (0,0)+-(r,0); label 1: (D,0)+-(r2,0)
        double r = 0.5, r2 = 1.5, D = 10.0;
        std::vector<std::vector<float>> e = {{float(-r), 0}, {float(r), 0},
                                             {float(D - r2), 0}, {float(D + r2), 0}};
        std::vector<int> labels = {0, 0, 1, 1};
        auto m = cluster_metrics(e, labels);
        CHECK(m.intra_mean == doctest::Approx((r + r2) / 2).epsilon(1e-9));
        CHECK(m.inter_mean == doctest::Approx(D).epsilon(1e-9));
        CHECK(m.ratio == doctest::Approx((r + r2) / 2 / D).epsilon(1e-9));
    }

    SUBCASE("gaussian blobs match the chi-distribution mean within 5%") {
        // E || x - mu || for a 2-D isotropic gaussian is sigma * sqrt(pi/2)
        double sigma = 0.3, dist = 6.0;
        Rng rng(3);
        std::vector<std::vector<float>> e;
        std::vector<int> labels;
        for (int i = 0; i < 4000; ++i)
            for (int lab = 0; lab < 2; ++lab) {
                e.push_back({static_cast<float>(lab * dist + sigma * rng.normal()),
                             static_cast<float>(sigma * rng.normal())});
                labels.push_back(lab);
            }
        auto m = cluster_metrics(e, labels);
        double expect_intra = sigma * std::sqrt(3.14159265358979 / 2.0);
        CHECK(std::abs(m.intra_mean - expect_intra) / expect_intra <= 0.05);
        CHECK(std::abs(m.inter_mean - dist) / dist <= 0.05);
    }

    SUBCASE("shuffling labels increases the ratio") {
        Rng rng(5);
        std::vector<std::vector<float>> e;
        std::vector<int> labels;
        for (int i = 0; i < 60; ++i)
            for (int lab = 0; lab < 3; ++lab) {
                e.push_back({static_cast<float>(4.0 * lab + 0.3 * rng.normal()),
                             static_cast<float>(0.3 * rng.normal())});
                labels.push_back(lab);
            }
        auto base = cluster_metrics(e, labels);
        std::vector<int> shuffled = labels;
        Rng sr(8);
        shuffle(shuffled, sr);
        auto worse = cluster_metrics(e, shuffled);
        CHECK(worse.ratio > base.ratio);
    }

    SUBCASE("singleton labels are excluded with a warning") {
        std::vector<std::vector<float>> e = {{0, 0}, {0.5, 0}, {9, 9}, {9.5, 9}, {50, 50}};
        std::vector<int> labels = {0, 0, 1, 1, 2};
        auto m = cluster_metrics(e, labels);
        CHECK(m.warnings.size() == 1);
        CHECK(m.ratio > 0);
    }
}

TEST_CASE("copy-paste detector") {
    Image a = random_image(16, 1);
    Mask m(16, 16);
    for (int y = 4; y < 8; ++y)
        for (int x = 4; x < 8; ++x) m.at(y, x) = 1;

    SUBCASE("identical images") {
        auto s = copy_paste_score(a, a, m);
        CHECK(s.pixel_mse == 0.0);
        CHECK(s.identical_fraction == 1.0);
    }

    SUBCASE("independent noise is essentially never identical") {
        Image b = random_image(16, 2);
        auto s = copy_paste_score(a, b, m);
        CHECK(s.identical_fraction <= 0.01);
        CHECK(s.pixel_mse > 0.01);
    }

    SUBCASE("mixup algebra: mse of (0.9 blend vs original) is 0.01 * mean((a-b)^2)") {
        Image b = random_image(16, 3);
        Image mixed(16, 16, 3);
        for (size_t i = 0; i < a.v.size(); ++i) mixed.v[i] = 0.9f * a.v[i] + 0.1f * b.v[i];
        auto s = copy_paste_score(mixed, a, m);
        double expect = 0;
        int64_t n = 0;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                if (m.at(y, x)) continue;
                for (int c = 0; c < 3; ++c) {
                    double d = double(a.at(y, x, c)) - b.at(y, x, c);
                    expect += d * d;
                    ++n;
                }
            }
        expect = 0.01 * expect / double(n);
        CHECK(s.pixel_mse == doctest::Approx(expect).epsilon(1e-4));
    }

    SUBCASE("empty background region is degenerate") {
        Mask all(16, 16, 1);
        CHECK_THROWS_AS(copy_paste_score(a, a, all), Error);
    }
}

TEST_CASE("feature extractor training, gate and persistence") {
    fs::path dir = fs::temp_directory_path() / "bggtest_extractor";
    fs::remove_all(dir);
    SynthConfig scfg;
    scfg.num_categories = 3;
    scfg.records_per_category = 40;
    scfg.image_size = 32;
    scfg.seed = 6;
    DatasetManifest man = synthesize_corpus(scfg, dir.string());

    ExtractorConfig cfg;
    cfg.d_e = 16;
    cfg.steps = 250;
    cfg.batch = 24;
    cfg.seed = 11;
    cfg.accuracy_gate = 0.9f;

    FeatureExtractor ex = train_extractor(man, cfg);

    SUBCASE("held-out accuracy clears the gate and training is deterministic") {
        std::vector<Image> held;
        std::vector<int> labels;
        for (const auto& id : man.split("eval_bg1k")) {
            AdRecord rec = load_record(man, id);
            held.push_back(apply_mask(rec.image, rec.mask, 0));
            labels.push_back(rec.category_id);
        }
        CHECK(ex.held_out_accuracy(held, labels) >= 0.9);

        FeatureExtractor ex2 = train_extractor(man, cfg);
        auto p1 = ex.params().all();
        auto p2 = ex2.params().all();
        REQUIRE(p1.size() == p2.size());
        for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value.v == p2[i]->value.v);
    }

    SUBCASE("shuffled labels cannot clear the gate") {
        std::vector<Image> train_bg, held_bg;
        std::vector<int> train_labels, held_labels;
        for (const auto& id : man.split("train")) {
            AdRecord rec = load_record(man, id);
            train_bg.push_back(apply_mask(rec.image, rec.mask, 0));
            train_labels.push_back(rec.category_id);
        }
        for (const auto& id : man.split("eval_bg1k")) {
            AdRecord rec = load_record(man, id);
            held_bg.push_back(apply_mask(rec.image, rec.mask, 0));
            held_labels.push_back(rec.category_id);
        }
        Rng sr(17);
        shuffle(train_labels, sr);
        ExtractorConfig fast = cfg;
        fast.steps = 120;
        CHECK_THROWS_AS(
            train_extractor_on(train_bg, train_labels, held_bg, held_labels, man.num_categories(), fast),
            Error);
    }

    SUBCASE("similarity properties") {
        AdRecord rec = load_record(man, man.split("eval_bg1k")[0]);
        Image bg = apply_mask(rec.image, rec.mask, 0);
        CHECK(embed_similarity(bg, bg, ex) == doctest::Approx(100.0).epsilon(1e-6));
        AdRecord rec2 = load_record(man, man.split("eval_bg1k")[1]);
        Image bg2 = apply_mask(rec2.image, rec2.mask, 0);
        CHECK(embed_similarity(bg, bg2, ex) == doctest::Approx(embed_similarity(bg2, bg, ex)).epsilon(1e-9));

        // fresh (untrained) extractor embeds an all-zero image to the zero
        // vector: degenerate input
        FeatureExtractor fresh(cfg, 3, 1);
        Image zero(32, 32, 3, 0.f);
        CHECK_THROWS_AS(embed_similarity(zero, bg, fresh), Error);
    }

    SUBCASE("same-category backgrounds are more similar on average") {
        std::vector<std::pair<Image, int>> samples;
        for (const auto& id : man.split("eval_bg1k")) {
            AdRecord rec = load_record(man, id);
            samples.emplace_back(apply_mask(rec.image, rec.mask, 0), rec.category_id);
        }
        double same_sum = 0, cross_sum = 0;
        int same_n = 0, cross_n = 0;
        for (size_t i = 0; i < samples.size(); ++i)
            for (size_t j = i + 1; j < samples.size() && same_n + cross_n < 400; ++j) {
                double s = embed_similarity(samples[i].first, samples[j].first, ex);
                if (samples[i].second == samples[j].second) {
                    same_sum += s;
                    ++same_n;
                } else {
                    cross_sum += s;
                    ++cross_n;
                }
            }
        REQUIRE(same_n > 0);
        REQUIRE(cross_n > 0);
        CHECK(same_sum / same_n > cross_sum / cross_n);
    }

    SUBCASE("save/load round trip preserves parameters and embeddings") {
        std::string path = (dir / "extractor.ckpt").string();
        ex.save(path);
        FeatureExtractor loaded = FeatureExtractor::load(path);
        AdRecord rec = load_record(man, man.split("train")[0]);
        Image bg = apply_mask(rec.image, rec.mask, 0);
        CHECK(loaded.embed(bg) == ex.embed(bg));
        CHECK(loaded.classify(bg) == ex.classify(bg));
    }
}
