#ifndef R3T_H
#define R3T_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum R3tInfoCase
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  R3T_INFO_CASE_CIC = 0,
  R3T_INFO_CASE_IIC = 1,
};
#ifndef __cplusplus
typedef uint32_t R3tInfoCase;
#endif // __cplusplus

enum R3tMechanism
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  R3T_MECHANISM_R3T = 0,
  R3T_MECHANISM_CTWT = 1,
  R3T_MECHANISM_LINEAR = 2,
};
#ifndef __cplusplus
typedef uint32_t R3tMechanism;
#endif // __cplusplus

/*
 Result of every fallible call. Values 2 and 3 match the command-line exit codes.
 */
typedef enum R3tStatus {
  R3T_STATUS_OK = 0,
  R3T_STATUS_NULL_POINTER = 1,
  R3T_STATUS_CONFIG = 2,
  R3T_STATUS_INFEASIBLE = 3,
  R3T_STATUS_AUDIT_FAILED = 4,
  R3T_STATUS_INVALID_ARGUMENT = 5,
  R3T_STATUS_PARSE = 6,
  R3T_STATUS_PANIC = 7,
} R3tStatus;

/*
 Validated market configuration.
 */
typedef struct R3tConfig R3tConfig;

/*
 Contract menu, one item per type.
 */
typedef struct R3tMenu R3tMenu;

typedef struct R3tItem {
  size_t type_index;
  uint32_t join_round;
  double bonus_factor;
  double effort;
  double salary;
  double bonus;
  double reward;
} R3tItem;

typedef struct R3tAuditSummary {
  bool pass;
  size_t ir_violations;
  size_t ic_violations;
  size_t monotonicity_failures;
  size_t item_errors;
  /*
   Spend minus budget; positive means over budget.
   */
  double bf_excess;
} R3tAuditSummary;

typedef struct R3tSimSummary {
  uint32_t rounds_completed;
  bool complete;
  double cloud_utility;
  double client_utility;
  double spend;
  uint64_t spend_micro;
  double final_performance;
  size_t ledger_events;
  uint64_t ledger_paid_micro;
  bool chain_verified;
} R3tSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the most recent failure on this thread, or null. Valid until the
 next failing call on the same thread; do not free.
 */
const char *r3t_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *r3t_version(void);

/*
 Frees a string returned by this library. Null is ignored.

 # Safety
 `s` must be null or a pointer obtained from this library and not yet freed.
 */
void r3t_string_free(char *s);

/*
 Creates the reference configuration.

 # Safety
 `out` must be valid for writes.
 */
enum R3tStatus r3t_config_default(struct R3tConfig **out);

/*
 Parses and validates a TOML config. Omitted keys take reference values.

 # Safety
 `toml` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum R3tStatus r3t_config_from_toml(const char *toml, struct R3tConfig **out);

/*
 # Safety
 `cfg` must be null or a handle from this library that has not been freed.
 */
void r3t_config_free(struct R3tConfig *cfg);

/*
 Number of client types, or 0 for a null handle.

 # Safety
 `cfg` must be null or a live handle.
 */
size_t r3t_config_num_types(const struct R3tConfig *cfg);

/*
 Hex SHA-256 digest of the resolved parameters; free with [`r3t_string_free`].

 # Safety
 `cfg` must be null or a live handle.
 */
char *r3t_config_digest(const struct R3tConfig *cfg);

/*
 Solves the menu for `round` (1-based). `mechanism` must be `R3T` or `CTWT`.

 # Safety
 `cfg` must be a live handle; `out` must be valid for writes.
 */
enum R3tStatus r3t_solve(const struct R3tConfig *cfg,
                         uint32_t info_case,
                         uint32_t mechanism,
                         uint32_t round,
                         struct R3tMenu **out);

/*
 # Safety
 `menu` must be null or a handle from this library that has not been freed.
 */
void r3t_menu_free(struct R3tMenu *menu);

/*
 Number of items, or 0 for a null handle.

 # Safety
 `menu` must be null or a live handle.
 */
size_t r3t_menu_len(const struct R3tMenu *menu);

/*
 Copies item `index` (0-based) into `out`.

 # Safety
 `menu` must be a live handle; `out` must be valid for writes.
 */
enum R3tStatus r3t_menu_item(const struct R3tMenu *menu, size_t index, struct R3tItem *out);

/*
 Menu document as JSON; free with [`r3t_string_free`]. Null for a null handle.

 # Safety
 `menu` must be null or a live handle.
 */
char *r3t_menu_to_json(const struct R3tMenu *menu);

/*
 Parses a menu document and checks it has one item per type of `cfg`.

 # Safety
 `cfg` must be a live handle, `json` NUL-terminated, `out` valid for writes.
 */
enum R3tStatus r3t_menu_from_json(const struct R3tConfig *cfg,
                                  const char *json,
                                  struct R3tMenu **out);

/*
 Audits `menu` against `cfg`. The summary is filled in either way;
 the status is `AUDIT_FAILED` when any check fails.

 # Safety
 `cfg` and `menu` must be live handles; `out` must be valid for writes.
 */
enum R3tStatus r3t_audit(const struct R3tConfig *cfg,
                         const struct R3tMenu *menu,
                         struct R3tAuditSummary *out);

/*
 Runs `rounds` rounds of the simulation and summarizes the trace and ledger.
 A run that halts on an infeasible round still returns `OK` with
 `complete == false`.

 # Safety
 `cfg` must be a live handle; `out` must be valid for writes.
 */
enum R3tStatus r3t_simulate(const struct R3tConfig *cfg,
                            uint32_t mechanism,
                            uint32_t info_case,
                            uint32_t rounds,
                            struct R3tSimSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* R3T_H */
