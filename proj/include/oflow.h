/* Public C API of the oflow optical-flow toolkit.
 *
 * All objects are opaque handles created and destroyed through these
 * functions. Calls return of_status; anything but OF_OK leaves a
 * human-readable message in of_last_error() (thread-local, valid until the
 * next failing call on the same thread).
 */
#ifndef OFLOW_H
#define OFLOW_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(OFLOW_BUILD)
#    define OFLOW_API __declspec(dllexport)
#  else
#    define OFLOW_API __declspec(dllimport)
#  endif
#else
#  define OFLOW_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum of_status {
  OF_OK = 0,
  OF_ERR_INVALID_ARGUMENT = 1,
  OF_ERR_IO = 2,
  OF_ERR_FORMAT = 3,
  OF_ERR_SHAPE = 4,
  OF_ERR_DOMAIN = 5,
  OF_ERR_NUMERIC = 6,
  OF_ERR_INTERNAL = 7
} of_status;

OFLOW_API const char* of_version(void);
OFLOW_API const char* of_last_error(void);

typedef struct of_flow of_flow;   /* per-pixel (u, v) field with validity mask */
typedef struct of_image of_image; /* RGB image, float channels in [0, 1] */
typedef struct of_net of_net;     /* network plus optional training state */

/* ---- flow fields -------------------------------------------------------- */

OFLOW_API of_status of_flow_create(int height, int width, of_flow** out);
OFLOW_API of_status of_flow_read(const char* path, of_flow** out);
OFLOW_API of_status of_flow_write(const of_flow* flow, const char* path);
OFLOW_API int of_flow_height(const of_flow* flow);
OFLOW_API int of_flow_width(const of_flow* flow);
/* Direct views of the h*w planes; valid entries are 0/1. */
OFLOW_API of_status of_flow_data(of_flow* flow, float** u, float** v, unsigned char** valid);
OFLOW_API void of_flow_free(of_flow* flow);

/* Mean endpoint error of `flow` against `gt` over valid pixels. */
OFLOW_API of_status of_flow_average_epe(const of_flow* flow, const of_flow* gt, double* out);

/* max_mag <= 0 normalizes by the maximum magnitude over valid pixels. */
OFLOW_API of_status of_flow_colorize(const of_flow* flow, float max_mag, of_image** out);

/* ---- images ------------------------------------------------------------- */

OFLOW_API of_status of_image_read(const char* path, of_image** out); /* PNG or PPM */
OFLOW_API of_status of_image_write(const of_image* img, const char* path); /* .png or PPM */
OFLOW_API int of_image_height(const of_image* img);
OFLOW_API int of_image_width(const of_image* img);
OFLOW_API void of_image_free(of_image* img);

/* ---- block matching ----------------------------------------------------- */

typedef struct of_blockmatch_params {
  int block_size;    /* odd, >= 3 */
  int search_radius; /* >= 1 */
  int step;          /* anchor stride */
} of_blockmatch_params;

OFLOW_API void of_blockmatch_params_init(of_blockmatch_params* params);

OFLOW_API of_status of_block_match(const of_image* frame1, const of_image* frame2,
                                   const of_blockmatch_params* params, of_flow** out);

/* ---- networks ----------------------------------------------------------- */

/* arch is "plainnet" or "finalnet". */
OFLOW_API of_status of_net_create(const char* arch, unsigned long long seed, of_net** out);
OFLOW_API of_status of_net_load(const char* checkpoint_path, of_net** out);
OFLOW_API of_status of_net_save(const of_net* net, const char* path);
OFLOW_API void of_net_free(of_net* net);

/* Layer table, filter and parameter counts. Returns the number of bytes that
 * would be written (excluding the terminator), like snprintf. */
OFLOW_API int of_net_describe(const of_net* net, char* buffer, size_t buffer_size);

/* Block-matching guide (NULL params = defaults), 8-channel assembly, forward
 * pass, un-padding. */
OFLOW_API of_status of_net_infer(of_net* net, const of_image* frame1, const of_image* frame2,
                                 const of_blockmatch_params* params, of_flow** out);

/* ---- training and evaluation -------------------------------------------- */

typedef struct of_train_config {
  int batch_size;
  float lr_initial;
  float lr_after_half;
  float momentum;
  int epochs;
  unsigned long long seed;
  int checkpoint_every;
  int crop_size;    /* multiple of 16, or 0 for full padded frames */
  int augment_flip; /* 0/1 */
  float ne_epsilon;
  int prefetch;     /* 0/1; 0 keeps loading single-threaded and bit-reproducible */
  int val_every;
  int max_iterations;
  double stop_train_epe;
  of_blockmatch_params guide;
} of_train_config;

OFLOW_API void of_train_config_init(of_train_config* cfg);

/* Reads a key=value config file. arch_buffer (may be NULL) receives the
 * network selection if the file carries one. */
OFLOW_API of_status of_train_config_load(const char* path, of_train_config* cfg,
                                         char* arch_buffer, size_t arch_buffer_size);

typedef struct of_dataset_options {
  const char* kind;       /* "sintel-train", "sintel-val", "sintel-all", "middlebury" */
  const char* pass_name;  /* sintel pass, default "clean" */
  const char* split_file; /* scene list; NULL = builtin validation scenes */
} of_dataset_options;

OFLOW_API void of_dataset_options_init(of_dataset_options* opts);

typedef void (*of_epoch_callback)(int epoch, double train_epe, double val_epe, void* user);

/* Trains in place. Sintel data under dataset_root is split scene-wise into
 * train/val (the kind field is ignored here); guide flows are computed once
 * per pair and cached under out_dir/guides. Writes metrics.csv and
 * checkpoints under out_dir. */
OFLOW_API of_status of_train_run(of_net* net, const char* dataset_root,
                                 const of_dataset_options* data, const of_train_config* cfg,
                                 const char* out_dir, of_epoch_callback callback, void* user);

typedef void (*of_eval_row_callback)(const char* id, double blockmatch_epe, double network_epe,
                                     void* user);

/* Evaluates the network and the block-matching baseline on a dataset.
 * csv_path may be NULL; mean outputs may be NULL. */
OFLOW_API of_status of_evaluate(of_net* net, const char* dataset_root,
                                const of_dataset_options* data,
                                const of_blockmatch_params* guide_params, const char* csv_path,
                                of_eval_row_callback callback, void* user,
                                double* mean_blockmatch_epe, double* mean_network_epe);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* OFLOW_H */
