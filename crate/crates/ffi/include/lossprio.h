#ifndef LOSSPRIO_H
#define LOSSPRIO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpCorruption {
  LP_CORRUPTION_NONE = 0,
  LP_CORRUPTION_RANDOM_LABEL = 1,
  LP_CORRUPTION_SHUFFLED_PIXELS = 2,
  LP_CORRUPTION_GAUSSIAN = 3,
} LpCorruption;

typedef enum LpPrioritizerKind {
  LP_PRIORITIZER_KIND_UNIFORM = 0,
  LP_PRIORITIZER_KIND_SB_LOSS = 1,
  LP_PRIORITIZER_KIND_SB_ENTROPY = 2,
  LP_PRIORITIZER_KIND_VR = 3,
} LpPrioritizerKind;

typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_CONFIG = 3,
  LP_STATUS_IO = 4,
  LP_STATUS_NUMERICAL = 5,
  LP_STATUS_DIVERGED = 6,
  LP_STATUS_FORMAT = 7,
  LP_STATUS_BUFFER_TOO_SMALL = 8,
  LP_STATUS_PANIC = 9,
} LpStatus;

typedef struct LpDataset LpDataset;

typedef struct LpModel LpModel;

typedef struct LpPrioritizer LpPrioritizer;

typedef struct LpRun LpRun;

/**
 * Trainer settings. `max_backprops` of 0 means no cap.
 */
typedef struct LpTrainerConfig {
  double learning_rate;
  double momentum;
  double weight_decay;
  size_t batch_size;
  size_t total_epochs;
  size_t hidden_width;
  size_t hidden_layers;
  uint64_t seed;
  uint64_t max_backprops;
  uint64_t eval_every;
} LpTrainerConfig;

/**
 * Backprops-to-threshold result. `reached` is false when the method never
 * gets to the threshold, in which case `method_backprops` and `speedup`
 * are 0.
 */
typedef struct LpSpeedup {
  double threshold_error;
  uint64_t baseline_backprops;
  uint64_t method_backprops;
  double speedup;
  double best_error;
  bool reached;
} LpSpeedup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next failing
 * call on the same thread.
 */
const char *lp_last_error(void);

/**
 * Defaults for every trainer field, with `eval_every` set to ten batches.
 */
struct LpTrainerConfig lp_trainer_config_default(void);

/**
 * Synthetic clustered classification task.
 */
enum LpStatus lp_dataset_synthetic(size_t n_train,
                                   size_t n_test,
                                   size_t num_classes,
                                   size_t feature_dim,
                                   uint64_t seed,
                                   struct LpDataset **out);

/**
 * Corrupts the training split in place.
 */
enum LpStatus lp_dataset_corrupt(struct LpDataset *dataset,
                                 enum LpCorruption kind,
                                 double fraction,
                                 uint64_t seed);

/**
 * Number of training examples; 0 for a null handle.
 */
size_t lp_dataset_train_len(const struct LpDataset *dataset);

/**
 * Number of corrupted training examples; 0 for a null handle.
 */
size_t lp_dataset_corrupted_count(const struct LpDataset *dataset);

void lp_dataset_free(struct LpDataset *dataset);

/**
 * `pool_batches` is only read for VR, `beta` only for the SB kinds.
 */
enum LpStatus lp_prioritizer_new(enum LpPrioritizerKind kind,
                                 double beta,
                                 size_t pool_batches,
                                 size_t batch_size,
                                 size_t num_classes,
                                 uint64_t seed,
                                 struct LpPrioritizer **out);

/**
 * Feeds `n` scored candidates. `probs` holds `n * num_classes` row-major
 * softmax outputs and may be null unless the kind is entropy-based.
 * Emitted ids are written back to back into `out_ids`; `out_len` receives
 * their count. Fails with `BUFFER_TOO_SMALL` (writing the needed length)
 * if `out_cap` is insufficient, in which case the batches are lost.
 */
enum LpStatus lp_prioritizer_feed(struct LpPrioritizer *prioritizer,
                                  const uint64_t *ids,
                                  const double *losses,
                                  const double *probs,
                                  size_t n,
                                  uint64_t *out_ids,
                                  size_t out_cap,
                                  size_t *out_len);

/**
 * Writes the prioritizer state as a NUL-terminated JSON line into `buf`.
 * `needed` receives the required size including the terminator.
 */
enum LpStatus lp_prioritizer_snapshot(const struct LpPrioritizer *prioritizer,
                                      char *buf,
                                      size_t cap,
                                      size_t *needed);

void lp_prioritizer_free(struct LpPrioritizer *prioritizer);

/**
 * MLP with the given layer widths, input first and classes last.
 */
enum LpStatus lp_model_new(const size_t *widths,
                           size_t n_widths,
                           uint64_t seed,
                           struct LpModel **out);

/**
 * Softmax output for one example, written to `probs_out[0..num_classes]`.
 */
enum LpStatus lp_model_predict(const struct LpModel *model,
                               const double *features,
                               size_t dim,
                               double *probs_out,
                               size_t num_classes);

size_t lp_model_param_count(const struct LpModel *model);

void lp_model_free(struct LpModel *model);

/**
 * Trains on `dataset` with the given prioritizer settings. A diverged run
 * still yields a handle, and the call returns `DIVERGED`.
 */
enum LpStatus lp_train(const struct LpDataset *dataset,
                       const struct LpTrainerConfig *config,
                       enum LpPrioritizerKind kind,
                       double beta,
                       size_t pool_batches,
                       struct LpRun **out);

size_t lp_run_eval_count(const struct LpRun *run);

/**
 * The `index`-th evaluation as (backprops, test error).
 */
enum LpStatus lp_run_eval_point(const struct LpRun *run,
                                size_t index,
                                uint64_t *backprops,
                                double *test_error);

double lp_run_best_error(const struct LpRun *run);

uint64_t lp_run_total_backprops(const struct LpRun *run);

/**
 * Mean corrupted fraction of the batches from `start` (fraction of the
 * run) onwards.
 */
double lp_run_corrupted_fraction(const struct LpRun *run, double start);

void lp_run_free(struct LpRun *run);

/**
 * Compares two evaluation curves given as parallel arrays of backprop
 * counts and test errors.
 */
enum LpStatus lp_speedup(const uint64_t *baseline_backprops,
                         const double *baseline_errors,
                         size_t n_baseline,
                         const uint64_t *method_backprops,
                         const double *method_errors,
                         size_t n_method,
                         double slack,
                         struct LpSpeedup *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOSSPRIO_H */
