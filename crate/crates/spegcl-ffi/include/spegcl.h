/* C ABI for the spegcl library. Generated by cbindgen; do not edit. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function. 0 is success;
 * 1/2/3 mirror the CLI's configuration/data/numeric error classes.
 */
typedef enum SpeGclStatus {
  SpeGclStatus_Ok = 0,
  SpeGclStatus_InvalidArgument = 1,
  SpeGclStatus_DataError = 2,
  SpeGclStatus_NumericError = 3,
  SpeGclStatus_NullPointer = 4,
  SpeGclStatus_InvalidUtf8 = 5,
  SpeGclStatus_BufferTooSmall = 6,
  SpeGclStatus_InternalError = 7,
} SpeGclStatus;

/**
 * Opaque dataset handle.
 */
typedef struct SpeGclDataset SpeGclDataset;

/**
 * Opaque trained-model handle (encoder parameters plus optimizer state).
 */
typedef struct SpeGclModel SpeGclModel;

/**
 * Training options. Zero-initialize and fill, or call
 * `spegcl_train_options_default` first.
 */
typedef struct SpeGclTrainOptions {
  uint64_t epochs;
  uint64_t batch_size;
  double learning_rate;
  uint64_t seed;
  /**
   * Contrastive temperature (> 0).
   */
  double tau;
  uint64_t m_negatives;
  /**
   * 0 = nce, 1 = neg_only, 2 = align_only.
   */
  int32_t loss_mode;
  /**
   * 0 = cross_view, 1 = cross_and_in_view.
   */
  int32_t negative_policy;
  /**
   * Nonzero averages both contrast directions.
   */
  int32_t symmetrize;
  double omega_node;
  double omega_edge;
  double radius_ratio;
  uint64_t augment_seed;
  /**
   * Hidden layer widths; entries beyond `n_hidden` are ignored.
   */
  uint64_t hidden_dims[8];
  uint64_t n_hidden;
  uint64_t emb_dim;
  /**
   * 0 = fourier, 1 = gcn, 2 = gin.
   */
  int32_t encoder_kind;
} SpeGclTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *spegcl_version(void);

/**
 * Message for the most recent error on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *spegcl_last_error_message(void);

/**
 * Generate a synthetic two-class dataset (see the library's synthetic
 * generator for semantics). On success `*out` owns the handle.
 */
enum SpeGclStatus spegcl_dataset_gen_sbm(uint64_t n_graphs,
                                         uint64_t nodes_per_graph,
                                         double p_in_class0,
                                         double p_in_class1,
                                         double feature_noise,
                                         uint64_t seed,
                                         struct SpeGclDataset **out);

/**
 * Load a dataset in the TUDataset text format from `<root>/<name>_*.txt`.
 */
enum SpeGclStatus spegcl_dataset_load_tudataset(const char *root_path,
                                                const char *name,
                                                struct SpeGclDataset **out);

void spegcl_dataset_free(struct SpeGclDataset *dataset);

/**
 * Number of graphs, or 0 on a null handle.
 */
uint64_t spegcl_dataset_len(const struct SpeGclDataset *dataset);

uint64_t spegcl_dataset_num_classes(const struct SpeGclDataset *dataset);

uint64_t spegcl_dataset_feature_dim(const struct SpeGclDataset *dataset);

/**
 * Fill `opts` with the library defaults.
 */
enum SpeGclStatus spegcl_train_options_default(struct SpeGclTrainOptions *opts);

/**
 * Run self-supervised training; on success `*out` owns the model.
 */
enum SpeGclStatus spegcl_train(const struct SpeGclDataset *dataset,
                               const struct SpeGclTrainOptions *opts,
                               struct SpeGclModel **out);

/**
 * An untrained model with the same architecture/seeding the options
 * describe (the random-baseline for comparisons).
 */
enum SpeGclStatus spegcl_model_init_untrained(const struct SpeGclDataset *dataset,
                                              const struct SpeGclTrainOptions *opts,
                                              struct SpeGclModel **out);

void spegcl_model_free(struct SpeGclModel *model);

enum SpeGclStatus spegcl_model_save(const struct SpeGclModel *model, const char *path);

enum SpeGclStatus spegcl_model_load(const char *path, struct SpeGclModel **out);

/**
 * Embedding dimensionality of a model, or 0 on a null handle.
 */
uint64_t spegcl_model_embedding_dim(const struct SpeGclModel *model);

/**
 * Encode every graph of the dataset. `out_buf` must hold
 * `len(dataset) * embedding_dim` doubles; embeddings are written
 * row-major in dataset order.
 */
enum SpeGclStatus spegcl_model_embed(const struct SpeGclModel *model,
                                     const struct SpeGclDataset *dataset,
                                     double *out_buf,
                                     uint64_t buf_len);

/**
 * Frozen-embedding evaluation: stratified k-fold linear probe. Writes the
 * mean and standard deviation of the fold accuracies.
 */
enum SpeGclStatus spegcl_linear_probe(const struct SpeGclModel *model,
                                      const struct SpeGclDataset *dataset,
                                      uint64_t k_folds,
                                      uint64_t seed,
                                      double *out_mean,
                                      double *out_std);

/**
 * Check the loss sandwich `l_u <= info_nce <= l_u + slack` over random
 * unit embeddings on a `dim`-dimensional sphere; writes the violation
 * count (0 expected).
 */
enum SpeGclStatus spegcl_verify_prop1(uint64_t dim,
                                      double tau,
                                      uint64_t draws,
                                      uint64_t negatives_per_draw,
                                      uint64_t seed,
                                      uint64_t *out_violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
