/*
 * ze_mock_support.h - non-traced support surface of the mock runtime.
 *
 * Everything here is deliberately outside ze_mock.h: the traced API model
 * is built from that header alone, while these declarations serve the
 * harness (deterministic address-scheme constants) and the generated
 * interposer (profiling drain). The constants must stay in lockstep with
 * the Python runtime in src/hapitrace/mockrt.py.
 */
#ifndef ZE_MOCK_SUPPORT_H
#define ZE_MOCK_SUPPORT_H

#include <stdint.h>

#define ZE_MOCK_HOST_BASE 0x00004AAA00000000ull
#define ZE_MOCK_DEVICE_BASE 0xFF007FFF00000000ull
#define ZE_MOCK_CMDLIST_HANDLE_BASE 0x00005EED00010000ull
#define ZE_MOCK_EVENT_HANDLE_BASE 0x00005EED00020000ull
#define ZE_MOCK_HANDLE_STRIDE 0x40ull
#define ZE_MOCK_STAGING_SLOT_SIZE 4096ull
#define ZE_MOCK_ALLOC_REGION_OFFSET 0x40000ull
#define ZE_MOCK_ALLOC_ALIGN 16ull
#define ZE_MOCK_ARENA_SIZE (16ull << 20)
#define ZE_MOCK_FILL_BYTE 0x5A
#define ZE_MOCK_POISON_BYTE 0xEE

/* cost table (virtual ns) */
#define ZE_MOCK_HOST_CALL_OVERHEAD_NS 500ull
#define ZE_MOCK_MEMCPY_FIXED_NS 2000ull
#define ZE_MOCK_MEMCPY_PER_BYTE_NS 1ull
#define ZE_MOCK_KERNEL_PER_GROUP_NS 1000ull
#define ZE_MOCK_SYNC_POLL_NS 100ull

/* layout must match the interposer's ztrc_profiling_record_t */
typedef struct {
    char function[64];
    char command_kind[16];
    char name[64];
    uint64_t device_start_ns;
    uint64_t device_end_ns;
    uint32_t tile;
    uint32_t engine;
} ze_mock_profiling_record_t;

/* Completed (by the runtime's virtual clock) and not yet fetched profiling
 * records, in (device_end, submission) order; removes what it returns. */
uint32_t zeMockFetchProfilingRecords(ze_mock_profiling_record_t* out, uint32_t max_records);

/* Current virtual time; exposed for debugging and the replay driver. */
uint64_t zeMockVirtualNowNs(void);

#endif /* ZE_MOCK_SUPPORT_H */
