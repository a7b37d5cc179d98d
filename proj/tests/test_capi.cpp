#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "bgg.h"

namespace fs = std::filesystem;

namespace {

std::string tmp(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("bggtest_capi_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("c api: corpus, manifest, validation") {
    std::string dir = tmp("corpus");
    char manifest_path[1024];
    const char* cfg = R"({"num_categories":3,"records_per_category":24,"image_size":32,"seed":7})";
    REQUIRE(bgg_synth_corpus(cfg, dir.c_str(), manifest_path, sizeof manifest_path) == BGG_OK);

    bgg_manifest* man = nullptr;
    REQUIRE(bgg_manifest_open(manifest_path, &man) == BGG_OK);
    CHECK(bgg_manifest_record_count(man) == 72);
    CHECK(bgg_manifest_category_count(man) == 3);

    char report[1024];
    CHECK(bgg_validate_record(man, "c00_b0_r0000", report, sizeof report) == BGG_OK);
    CHECK(std::string(report).find("\"ok\":true") != std::string::npos);

    CHECK(bgg_validate_record(man, "missing_record", report, sizeof report) == BGG_E_USAGE);
    CHECK(std::strlen(bgg_last_error()) > 0);
    bgg_manifest_close(man);

    bgg_manifest* bad = nullptr;
    CHECK(bgg_manifest_open("/nonexistent/manifest.json", &bad) != BGG_OK);
}

TEST_CASE("c api: invalid config json is a usage error") {
    std::string dir = tmp("badcfg");
    CHECK(bgg_synth_corpus("{not json", dir.c_str(), nullptr, 0) == BGG_E_USAGE);
    CHECK(std::string(bgg_last_error()).find("JSON") != std::string::npos);
}

TEST_CASE("c api: train, open model, generate, image round trip") {
    std::string dir = tmp("train");
    char manifest_path[1024];
    const char* scfg = R"({"num_categories":2,"records_per_category":12,"image_size":32,"seed":3})";
    REQUIRE(bgg_synth_corpus(scfg, dir.c_str(), manifest_path, sizeof manifest_path) == BGG_OK);

    char ckpt[1024];
    const char* tcfg =
        R"({"stage":"cg_only","joint_backbone":true,"steps":2,"batch_size":2,"seed":5,
            "denoiser":{"base_channels":8,"gn_groups":4,"num_heads":2,"prompt_dim":16}})";
    REQUIRE(bgg_train(manifest_path, tcfg, (dir + "/run").c_str(), ckpt, sizeof ckpt) == BGG_OK);

    bgg_model* model = nullptr;
    REQUIRE(bgg_model_open(ckpt, &model) == BGG_OK);
    char info[2048];
    REQUIRE(bgg_model_info(model, info, sizeof info) == BGG_OK);
    CHECK(std::string(info).find("\"has_cg\":true") != std::string::npos);

    // generate for the first corpus record
    std::string product = dir + "/images/c00_b0_r0000.png";
    std::string mask = dir + "/masks/c00_b0_r0000.png";
    std::string req = std::string("{\"product\":\"") + product + "\",\"mask\":\"" + mask +
                      "\",\"category\":0,\"steps\":4,\"seed\":9}";
    bgg_image* img = nullptr;
    char prov[1024];
    REQUIRE(bgg_generate(model, req.c_str(), &img, prov, sizeof prov) == BGG_OK);
    CHECK(bgg_image_width(img) == 32);
    CHECK(bgg_image_height(img) == 32);
    CHECK(bgg_image_data(img) != nullptr);

    std::string out_png = dir + "/gen.png";
    REQUIRE(bgg_image_save(img, out_png.c_str()) == BGG_OK);
    bgg_image* back = nullptr;
    REQUIRE(bgg_image_load(out_png.c_str(), &back) == BGG_OK);
    CHECK(bgg_image_width(back) == 32);
    bgg_image_close(back);
    bgg_image_close(img);

    // pg requested without reference: usage error
    std::string bad_req = std::string("{\"product\":\"") + product + "\",\"mask\":\"" + mask +
                          "\",\"category\":0,\"use_pg\":true}";
    bgg_image* none = nullptr;
    CHECK(bgg_generate(model, bad_req.c_str(), &none, nullptr, 0) == BGG_E_USAGE);
    bgg_model_close(model);
}

TEST_CASE("c api: extractor and similarity") {
    std::string dir = tmp("extractor");
    char manifest_path[1024];
    const char* scfg = R"({"num_categories":3,"records_per_category":40,"image_size":32,"seed":6})";
    REQUIRE(bgg_synth_corpus(scfg, dir.c_str(), manifest_path, sizeof manifest_path) == BGG_OK);

    std::string ex_path = dir + "/extractor.ckpt";
    const char* xcfg = R"({"d_e":8,"steps":220,"batch":24,"seed":11})";
    REQUIRE(bgg_train_extractor(manifest_path, xcfg, ex_path.c_str()) == BGG_OK);

    bgg_extractor* ex = nullptr;
    REQUIRE(bgg_extractor_open(ex_path.c_str(), &ex) == BGG_OK);

    bgg_image* a = nullptr;
    REQUIRE(bgg_image_load((dir + "/images/c00_b0_r0000.png").c_str(), &a) == BGG_OK);
    double sim = 0;
    REQUIRE(bgg_embed_similarity(ex, a, nullptr, a, nullptr, &sim) == BGG_OK);
    CHECK(sim == doctest::Approx(100.0).epsilon(1e-6));
    bgg_image_close(a);
    bgg_extractor_close(ex);

    // fid between two directories via the evaluate entry point
    char report[4096];
    std::string args = std::string("{\"extractor\":\"") + ex_path + "\",\"set_a\":\"" + dir +
                       "/images\",\"set_b\":\"" + dir + "/images\"}";
    REQUIRE(bgg_evaluate("fid", args.c_str(), report, sizeof report) == BGG_OK);
    CHECK(std::string(report).find("\"fid\"") != std::string::npos);

    CHECK(bgg_evaluate("unknown_metric", "{}", report, sizeof report) == BGG_E_USAGE);
}

TEST_CASE("c api: buffer too small is reported") {
    std::string dir = tmp("buf");
    char manifest_path[4];
    const char* cfg = R"({"num_categories":2,"records_per_category":8,"seed":1})";
    CHECK(bgg_synth_corpus(cfg, dir.c_str(), manifest_path, sizeof manifest_path) == BGG_E_BUFFER);
    CHECK(std::string(bgg_last_error()).find("buffer") != std::string::npos);
}

TEST_CASE("c api: version string") { CHECK(std::string(bgg_version()) == "1.0.0"); }
