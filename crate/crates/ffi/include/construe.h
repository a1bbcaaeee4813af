#ifndef CONSTRUE_H
#define CONSTRUE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConstrueStatus {
  CONSTRUE_STATUS_OK = 0,
  CONSTRUE_STATUS_NULL_ARGUMENT = 1,
  CONSTRUE_STATUS_INVALID_UTF8 = 2,
  CONSTRUE_STATUS_KB_ERROR = 3,
  CONSTRUE_STATUS_INPUT_ERROR = 4,
  // The search budget ran out; the report is still written.
  CONSTRUE_STATUS_TRUNCATED = 5,
  CONSTRUE_STATUS_ORACLE_ERROR = 6,
  CONSTRUE_STATUS_PANIC = 7,
} ConstrueStatus;

// A parsed knowledge base with the built-in procedures.
typedef struct ConstrueKb ConstrueKb;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses knowledge-base text into a new handle written to `out`.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum ConstrueStatus construe_kb_parse(const char *text, struct ConstrueKb **out);

// Loads one of the shipped knowledge bases (`sinus`, `ecg_waves`,
// `ecg_rhythms`); several names may be joined with commas.
//
// # Safety
// As [`construe_kb_parse`].
enum ConstrueStatus construe_kb_builtin(const char *names, struct ConstrueKb **out);

// # Safety
// `kb` must come from this library and not be used afterwards.
void construe_kb_free(struct ConstrueKb *kb);

// Nodes expanded per search iteration when none is given; 0 for a null handle.
//
// # Safety
// `kb` must be null or a live handle.
uintptr_t construe_kb_default_k(const struct ConstrueKb *kb);

// Interprets the observations in `input_json` and writes the report JSON
// to `out_json`. `k` of 0 uses the knowledge-base default; `max_nodes`
// of 0 uses the library default.
//
// # Safety
// `kb` must be a live handle, `input_json` NUL-terminated, `out_json` valid.
enum ConstrueStatus construe_interpret(const struct ConstrueKb *kb,
                                       const char *input_json,
                                       uintptr_t k,
                                       uintptr_t max_nodes,
                                       char **out_json);

// Lists the abstraction patterns of a grammar (all grammars when
// `grammar` is null) with up to `max_findings` findings, as JSON.
//
// # Safety
// `kb` must be a live handle, `grammar` null or NUL-terminated, `out_json` valid.
enum ConstrueStatus construe_patterns(const struct ConstrueKb *kb,
                                      const char *grammar,
                                      uintptr_t max_findings,
                                      char **out_json);

// Solves `{"universe": [..], "sets": [[..], ..]}` three ways and writes
// `{"set_cover", "exclusive_cover", "construe"}` sizes (null when no
// cover exists) as JSON.
//
// # Safety
// `instance_json` must be NUL-terminated and `out_json` valid.
enum ConstrueStatus construe_setcover(const char *instance_json, char **out_json);

// Message of the last failure on this thread, or null. Owned by the
// library and valid until the next call that fails.
const char *construe_last_error(void);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void construe_string_free(char *s);

const char *construe_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONSTRUE_H */
