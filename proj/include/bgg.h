/* bggen C API: product background generation with category-wise and
 * personality-wise conditioning branches.
 *
 * All functions return bgg_status; on failure bgg_last_error() holds a
 * message for the calling thread. Objects returned through out-pointers are
 * owned by the caller and released with the matching *_close function.
 * String results are written into caller buffers (truncated if too small,
 * always NUL-terminated).
 */
#ifndef BGGEN_H
#define BGGEN_H

#include <stddef.h>
#include <stdint.h>

#if defined(__cplusplus)
extern "C" {
#endif

typedef enum bgg_status {
    BGG_OK = 0,
    BGG_E_RUNTIME = 1,   /* runtime failure (I/O, numeric abort, ...) */
    BGG_E_USAGE = 2,     /* bad arguments, config, or malformed input files */
    BGG_E_BUFFER = 3     /* output buffer too small */
} bgg_status;

typedef struct bgg_manifest bgg_manifest;   /* loaded dataset manifest */
typedef struct bgg_model bgg_model;         /* loaded model checkpoint */
typedef struct bgg_extractor bgg_extractor; /* loaded feature extractor */
typedef struct bgg_image bgg_image;         /* float RGB image in [0,1] */

const char* bgg_version(void);
const char* bgg_last_error(void);

/* ---- dataset ---------------------------------------------------------- */

/* config_json keys (all optional): num_categories, records_per_category,
 * image_size, seed, brands_per_category, train_fraction, bg1k_fraction.
 * Writes images/, masks/ and manifest.json under out_dir. */
bgg_status bgg_synth_corpus(const char* config_json, const char* out_dir, char* manifest_path_out,
                            size_t manifest_path_cap);

bgg_status bgg_manifest_open(const char* manifest_path, bgg_manifest** out);
void bgg_manifest_close(bgg_manifest* m);
int bgg_manifest_record_count(const bgg_manifest* m);
int bgg_manifest_category_count(const bgg_manifest* m);
/* JSON validation report for one record; never fails on content issues. */
bgg_status bgg_validate_record(const bgg_manifest* m, const char* record_id, char* report_json_out,
                               size_t report_cap);

/* ---- images ----------------------------------------------------------- */

bgg_status bgg_image_load(const char* png_path, bgg_image** out);
bgg_status bgg_image_save(const bgg_image* img, const char* png_path);
void bgg_image_close(bgg_image* img);
int bgg_image_width(const bgg_image* img);
int bgg_image_height(const bgg_image* img);
/* Row-major HWC float pixels; valid until bgg_image_close. */
const float* bgg_image_data(const bgg_image* img);

/* ---- perturbation preview -------------------------------------------- */

/* Side-by-side grid (original | dilated-mask overlay | margin-filled |
 * mixed | branch input) written as one PNG. params_json keys:
 * dilation_radius, sigma_lo, sigma_hi, enable_dilation, enable_fill,
 * enable_mixup, partner_record_id (optional), seed. */
bgg_status bgg_perturb_preview(const char* manifest_path, const char* record_id, const char* params_json,
                               const char* out_png);

/* ---- training --------------------------------------------------------- */

/* config_json mirrors the train CLI: stage (backbone|cg_only|cg_pg),
 * batch_size, steps, lr, seed, perturb{...}, joint_backbone, shared_prompt,
 * unmasked_cg, denoiser{...}, init_checkpoint, resume_checkpoint, run_name.
 * Writes checkpoints and a JSONL loss log under out_dir. */
bgg_status bgg_train(const char* manifest_path, const char* config_json, const char* out_dir,
                     char* checkpoint_path_out, size_t checkpoint_path_cap);

/* ---- model / generation ------------------------------------------------ */

bgg_status bgg_model_open(const char* checkpoint_path, bgg_model** out);
void bgg_model_close(bgg_model* m);
bgg_status bgg_model_info(const bgg_model* m, char* info_json_out, size_t info_cap);

/* request_json keys: product (png path), mask (png path), category (int),
 * reference (png path, optional), reference_mask (png path, optional),
 * use_pg (bool), reference_init (bool, default true), steps (default 50),
 * seed, mode ("final_composite" | "per_step_blend"). */
bgg_status bgg_generate(bgg_model* m, const char* request_json, bgg_image** image_out,
                        char* provenance_json_out, size_t provenance_cap);

/* ---- evaluation --------------------------------------------------------- */

/* config_json keys: d_e, steps, batch, lr, seed, accuracy_gate. */
bgg_status bgg_train_extractor(const char* manifest_path, const char* config_json, const char* out_path);
bgg_status bgg_extractor_open(const char* path, bgg_extractor** out);
void bgg_extractor_close(bgg_extractor* e);

/* 100 x cosine similarity between background embeddings. Masks may be NULL
 * (whole image used); when given, the mask==1 region is zeroed first. */
bgg_status bgg_embed_similarity(const bgg_extractor* e, const bgg_image* a, const bgg_image* mask_a,
                                const bgg_image* b, const bgg_image* mask_b, double* out);

/* metric: fid | sim | cluster | copypaste. args_json is metric-specific; see
 * the CLI `evaluate` documentation. Emits a JSON report. */
bgg_status bgg_evaluate(const char* metric, const char* args_json, char* report_json_out, size_t report_cap);

/* ---- experiment pipelines ---------------------------------------------- */

/* experiment: category_scale | personalized | ablation.
 * config_json keys: profile ("desk" | "ci"), seed. */
bgg_status bgg_reproduce(const char* experiment, const char* config_json, const char* out_dir,
                         char* report_path_out, size_t report_path_cap);

#if defined(__cplusplus)
} /* extern "C" */
#endif

#endif /* BGGEN_H */
