/* SPDX-License-Identifier: Apache-2.0 */

#ifndef GMBINET_GMBINET_H
#define GMBINET_GMBINET_H

#include <stdint.h>

#if defined(GMBINET_BUILDING_LIBRARY)
#define GMBI_API __attribute__((visibility("default")))
#else
#define GMBI_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gmbi_status {
  GMBI_OK = 0,
  GMBI_ERR_INVALID_ARGUMENT = 1, /* null pointer, malformed request */
  GMBI_ERR_CONFIG = 2,           /* rejected configuration value */
  GMBI_ERR_SHAPE = 3,            /* tensor or image geometry */
  GMBI_ERR_IO = 4,               /* unreadable/unwritable file, bad dataset */
  GMBI_ERR_INCOMPATIBLE = 5,     /* checkpoint does not match the graph */
  GMBI_ERR_NUMERIC = 6,          /* non-finite loss during training */
  GMBI_ERR_INTERNAL = 7
} gmbi_status;

typedef struct gmbi_model gmbi_model;

typedef void (*gmbi_progress_fn)(int64_t step, double lr, double loss, double mae, double iou, void* user);

/* Message of the last failed call on this thread; empty after success. */
GMBI_API const char* gmbi_last_error(void);
GMBI_API const char* gmbi_version(void);
GMBI_API const char* gmbi_status_name(gmbi_status status);

/* Strings returned through char** out-parameters are owned by the caller. */
GMBI_API void gmbi_string_free(char* text);

/* Caps intra-op worker threads (0 restores GMBI_THREADS / default). */
GMBI_API void gmbi_set_threads(int threads);

/* config_json: NULL or an object of overrides, e.g. {"preset":"gmbinet",
 * "scale_dim":4,"interaction":"ewms","skip":"sum"}; "num_classes" > 0 builds
 * the classifier. */
GMBI_API gmbi_status gmbi_model_create(const char* config_json, uint64_t seed, gmbi_model** out);
/* Self-describing load: the graph is rebuilt from the stored configuration. */
GMBI_API gmbi_status gmbi_model_load(const char* path, gmbi_model** out);
/* Loads weights into an existing model; fingerprint-checked. */
GMBI_API gmbi_status gmbi_model_load_weights(gmbi_model* model, const char* path);
GMBI_API gmbi_status gmbi_model_save(const gmbi_model* model, const char* path);
GMBI_API void gmbi_model_free(gmbi_model* model);

GMBI_API gmbi_status gmbi_model_param_count(const gmbi_model* model, int64_t* out);
GMBI_API gmbi_status gmbi_model_fingerprint(const gmbi_model* model, uint64_t* out);
/* Resolved configuration as JSON. */
GMBI_API gmbi_status gmbi_model_config(const gmbi_model* model, char** out_json);
/* Counted costs at (1, C, height, width): {"params","macs","secondary_ops"[,"nodes"]}. */
GMBI_API gmbi_status gmbi_model_cost(const gmbi_model* model, int64_t height, int64_t width, int breakdown,
                                     char** out_json);

/* image: 3 x height x width planar floats in [0, 1]; out: height x width. */
GMBI_API gmbi_status gmbi_predict(gmbi_model* model, const float* image, int64_t height, int64_t width,
                                  int64_t inference_size, float* out);
GMBI_API gmbi_status gmbi_predict_png(gmbi_model* model, const char* image_path, const char* output_path,
                                      int64_t inference_size);

/* Trains model in place. request_json keys: iterations, batch, lr, lr_floor,
 * size, seed, checkpoint_every, eval_every, alpha, side_resolution, augment,
 * out_dir, resume, data {synthetic, salt_pepper | dir, train_split,
 * eval_split}. */
GMBI_API gmbi_status gmbi_train(gmbi_model* model, const char* request_json, gmbi_progress_fn progress, void* user,
                                char** out_json);
/* request_json keys: data {...as for train}, size, threshold, dump_dir. */
GMBI_API gmbi_status gmbi_evaluate(gmbi_model* model, const char* request_json, char** out_json);
/* request_json keys: k, c, h, w, n (array), families (array), network
 * (config overrides), input_size, flops_x2. */
GMBI_API gmbi_status gmbi_analyze(const char* request_json, char** out_json);
GMBI_API gmbi_status gmbi_bench(gmbi_model* model, int64_t size, int64_t batch, int repeats, int warmup, uint64_t seed,
                                char** out_json);
/* request_json keys: count, size, seed, salt_pepper, out_dir. */
GMBI_API gmbi_status gmbi_synth(const char* request_json, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* GMBINET_GMBINET_H */
