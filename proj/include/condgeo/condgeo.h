/*
 * condgeo -- condition-metric geometry library.
 *
 * C API over the C++ core: opaque handles, status codes, and a thread-local
 * last-error message. All matrices and states are dense double arrays in
 * column-major order; matrix spaces of shape n x m are flattened to length
 * n*m ambient vectors.
 */
#ifndef CONDGEO_CONDGEO_H
#define CONDGEO_CONDGEO_H

#include <stddef.h>

#if defined(_WIN32)
#define CONDGEO_API __declspec(dllexport)
#else
#define CONDGEO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cg_status {
    CG_OK = 0,
    CG_ERROR_INVALID_ARGUMENT = 1,
    CG_ERROR_DIMENSION = 2,
    CG_ERROR_SINGULAR_GAP = 3,
    CG_ERROR_DOMAIN = 4,
    CG_ERROR_ORTHOGONALITY = 5,
    CG_ERROR_STEP_FAILURE = 6,
    CG_ERROR_CONSTRAINT_DRIFT = 7,
    CG_ERROR_RANK = 8,
    CG_ERROR_CONVERGENCE = 9,
    CG_ERROR_MULTIPLICITY = 10,
    CG_ERROR_SINGULAR_JACOBIAN = 11,
    CG_ERROR_NOT_CRITICAL = 12,
    CG_ERROR_NO_CONVERGENCE = 13,
    CG_ERROR_CONFIG = 14,
    CG_ERROR_IO = 15,
    CG_ERROR_UNKNOWN = 99
} cg_status;

typedef enum cg_stop_reason {
    CG_STOP_COMPLETED = 0,
    CG_STOP_DOMAIN_EXIT = 1,
    CG_STOP_SINGULAR_GAP = 2
} cg_stop_reason;

/* Opaque handles. */
typedef struct cg_metric cg_metric; /* conformal metric, possibly constrained */
typedef struct cg_path cg_path;     /* time-sampled geodesic with dense output */

CONDGEO_API const char* cg_version(void);
CONDGEO_API const char* cg_report_schema_version(void);
CONDGEO_API const char* cg_status_name(cg_status status);
/* Message of the last failing call on this thread; empty string if none. */
CONDGEO_API const char* cg_last_error(void);

/* --- smallest singular value and its derivatives ----------------------- */

CONDGEO_API cg_status cg_smallest_singular(const double* a, int n, int m, double* out);
CONDGEO_API cg_status cg_sigma_min_derivative(const double* a, const double* u, int n, int m,
                                              double* out);
CONDGEO_API cg_status cg_sigma_min_sq_second_derivative(const double* a, const double* u, int n,
                                                        int m, double* out);

/* --- metric construction ----------------------------------------------- */

CONDGEO_API cg_status cg_metric_create_gl(int n, int m, cg_metric** out);
CONDGEO_API cg_status cg_metric_create_gl_sphere(int n, int m, double radius, cg_metric** out);
CONDGEO_API cg_status cg_metric_create_hyperbolic(int dim, cg_metric** out);
CONDGEO_API cg_status cg_metric_create_frobenius(int n, cg_metric** out);
CONDGEO_API cg_status cg_metric_create_solution_variety(int n, cg_metric** out);
/* descriptor_json: {"type":"circle"|"ellipse"|"point_set"|"hyperplane"|
   "implicit_polynomial", ...}; builds alpha = 1/d(x,N)^2. */
CONDGEO_API cg_status cg_metric_create_distance(const char* descriptor_json, cg_metric** out);
/* Full metric config, same schema as the CLI "metric" config object. */
CONDGEO_API cg_status cg_metric_create_from_json(const char* metric_json, cg_metric** out);
CONDGEO_API void cg_metric_destroy(cg_metric* metric);

CONDGEO_API cg_status cg_metric_dim(const cg_metric* metric, int* out);
CONDGEO_API cg_status cg_metric_alpha(const cg_metric* metric, const double* x, int dim,
                                      double* out);
CONDGEO_API cg_status cg_metric_grad_alpha(const cg_metric* metric, const double* x, int dim,
                                           double* out);
/* Smallest eigenvalue of the pointwise self-convexity (-4) or plain
   convexity (-2) quadratic form, restricted to the constraint tangent space
   when the metric is constrained. */
CONDGEO_API cg_status cg_selfconvex_min_eigenvalue(const cg_metric* metric, const double* x,
                                                   int dim, double* out);
CONDGEO_API cg_status cg_convex_min_eigenvalue(const cg_metric* metric, const double* x, int dim,
                                               double* out);

/* --- geodesics ----------------------------------------------------------- */

typedef struct cg_integrate_opts {
    double abs_tol;      /* default 1e-10 */
    double rel_tol;      /* default 1e-9 */
    double alpha_cap;    /* default 1e12: DomainExit beyond this */
    double initial_step; /* 0 = automatic */
    double max_step;     /* 0 = horizon */
    long max_steps;      /* default 2000000 */
} cg_integrate_opts;

CONDGEO_API void cg_integrate_opts_default(cg_integrate_opts* opts);

CONDGEO_API cg_status cg_integrate_geodesic(const cg_metric* metric, const double* x0,
                                            const double* v0, int dim, double horizon,
                                            const cg_integrate_opts* opts /* nullable */,
                                            cg_path** out);
CONDGEO_API cg_status cg_shoot_geodesic(const cg_metric* metric, const double* x_a,
                                        const double* x_b, int dim, double time,
                                        const cg_integrate_opts* opts /* nullable */,
                                        cg_path** out, double* residual /* nullable */);
CONDGEO_API void cg_path_destroy(cg_path* path);

CONDGEO_API cg_status cg_path_time_range(const cg_path* path, double* t0, double* t1);
CONDGEO_API cg_status cg_path_dim(const cg_path* path, int* out);
CONDGEO_API cg_status cg_path_stop_reason(const cg_path* path, cg_stop_reason* out);
CONDGEO_API cg_status cg_path_eval(const cg_path* path, double t, double* x_out, double* v_out);
/* Writes columns t, x[0..dim), v[0..dim), alpha, metric_speed. */
CONDGEO_API cg_status cg_path_write_csv(const cg_path* path, const cg_metric* metric,
                                        const char* filename);
CONDGEO_API cg_status cg_path_read_csv(const char* filename, cg_path** out);

CONDGEO_API cg_status cg_condition_length(const cg_metric* metric, const cg_path* path,
                                          double* out);

/* Log-convexity report of alpha along the path as a JSON string
   {samples, min_d2, verdict, tolerances}; free with cg_string_free. */
CONDGEO_API cg_status cg_log_convexity_json(const cg_metric* metric, const cg_path* path,
                                            int grid_size, char** json_out);

CONDGEO_API void cg_string_free(char* text);

/* --- experiments --------------------------------------------------------- */

/* Runs a named experiment with a JSON config (NULL or "" for defaults).
   When the config sets "out", report.json and per-path CSVs are written
   there. *report_json_out (optional) receives the report; *exit_code is 0
   iff every claim verdict matches the asserted direction. */
CONDGEO_API cg_status cg_run_experiment(const char* name, const char* config_json,
                                        char** report_json_out /* nullable */, int* exit_code);
/* Newline-separated list of experiment names; free with cg_string_free. */
CONDGEO_API cg_status cg_experiment_list(char** out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CONDGEO_CONDGEO_H */
