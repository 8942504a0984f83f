#ifndef MOBILISCOPE_H
#define MOBILISCOPE_H

#include <stdint.h>

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_ARGUMENT = 1,
  MS_STATUS_INVALID_UTF8 = 2,
  MS_STATUS_INVALID_ARGUMENT = 3,
  MS_STATUS_PARSE = 4,
  MS_STATUS_CONFIG = 5,
  MS_STATUS_INTERNAL = 6,
} MsStatus;

// Loaded pipeline. Immutable after creation; safe to share across threads.
typedef struct MsPipeline MsPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread; empty after a success.
// Valid until the next call into this library on the same thread.
const char *ms_last_error(void);

// Great-circle distance in metres between two WGS84 points in degrees.
//
// # Safety
// `out_m` must be valid for one `double` write.
enum MsStatus ms_haversine_m(double lat1, double lon1, double lat2, double lon2, double *out_m);

// Creates a pipeline. `config_path` may be null for the bundled defaults.
//
// # Safety
// `config_path` is null or a NUL-terminated path; `out` must be valid for
// one pointer write. Release the result with [`ms_pipeline_free`].
enum MsStatus ms_pipeline_new(const char *config_path, struct MsPipeline **out);

// # Safety
// `pipeline` is null or was returned by [`ms_pipeline_new`] and not yet
// freed.
void ms_pipeline_free(struct MsPipeline *pipeline);

// Runs detection on a trace in the line format and writes the JSON report
// to `out_json`.
//
// # Safety
// `pipeline` is a live handle; `trace_text` is NUL-terminated; `out_json`
// must be valid for one pointer write.
enum MsStatus ms_pipeline_detect_json(const struct MsPipeline *pipeline,
                                      const char *trace_text,
                                      char **out_json);

// Daily pseudonym for `device_id` on `date` (`YYYY-MM-DD`) under a 32-byte
// secret given as 64 hex characters, with a one-day rotation period.
//
// # Safety
// String arguments are NUL-terminated; `out` must be valid for one pointer
// write.
enum MsStatus ms_pseudonymize(const char *device_id,
                              const char *date,
                              const char *secret_hex,
                              char **out);

// # Safety
// `s` is null or a string returned by this library and not yet freed.
void ms_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOBILISCOPE_H */
