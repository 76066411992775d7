/*
 * writer_binding.h - the five-function trace writer used by generated
 * interposers. Produces the exact directory layout and record encoding of
 * docs/trace-format.md: per-thread stream files, non-blocking emit with
 * drop-newest overflow accounting, one drainer thread.
 */
#ifndef ZTRC_WRITER_BINDING_H
#define ZTRC_WRITER_BINDING_H

#include <stdint.h>

typedef struct ztrc_stream ztrc_stream_t;

int ztrc_open(const char* dir, const char* metadata_path, uint64_t buffer_capacity);
ztrc_stream_t* ztrc_stream_acquire(void);
int ztrc_emit(ztrc_stream_t* s, uint32_t schema_id, uint64_t timestamp_ns,
              const uint8_t* payload, uint32_t payload_len);
uint64_t ztrc_clock_ns(void);
int ztrc_close(void);

#endif /* ZTRC_WRITER_BINDING_H */
