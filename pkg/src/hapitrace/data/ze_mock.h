/*
 * ze_mock.h - API surface of the bundled mock GPU runtime.
 *
 * This header is the single source of truth for the traced function set:
 * the Python header parser builds the API model from it, and the optional
 * C build (cinterpose/) compiles the runtime and the generated interposer
 * against it.
 *
 * The declaration grammar is deliberately restricted: handle typedefs,
 * enum blocks, fixed-width struct definitions, and one-declaration
 * function prototypes. Preprocessor lines are ignored by the parser.
 */
#ifndef ZE_MOCK_H
#define ZE_MOCK_H

#include <stdint.h>

typedef void* ze_mock_cmdlist_handle_t;
typedef void* ze_mock_event_handle_t;

typedef enum {
    ZE_MOCK_SUCCESS = 0,
    ZE_MOCK_NOT_READY = 1,
    ZE_MOCK_ERROR_UNINITIALIZED = 2,
    ZE_MOCK_ERROR_INVALID_HANDLE = 3,
    ZE_MOCK_ERROR_INVALID_STATE = 4,
    ZE_MOCK_ERROR_NOT_CLOSED = 5,
    ZE_MOCK_ERROR_ALREADY_CLOSED = 6,
    ZE_MOCK_ERROR_DOUBLE_EXECUTE = 7,
    ZE_MOCK_ERROR_TIMEOUT = 8,
    ZE_MOCK_ERROR_INVALID_ARGUMENT = 9
} ze_mock_result_t;

typedef enum {
    ZE_MOCK_SPACE_HOST = 0,
    ZE_MOCK_SPACE_DEVICE = 1
} ze_mock_space_t;

typedef struct {
    void* pNext;
    uint32_t deviceId;
    uint32_t numTiles;
    uint32_t coreClockMHz;
    uint32_t numEnginesPerTile;
    uint64_t totalMemBytes;
} ze_mock_device_properties_t;

ze_mock_result_t zeMockInit(uint32_t flags);
ze_mock_result_t zeMockDeviceGetProperties(uint32_t device, ze_mock_device_properties_t* pProperties);
ze_mock_result_t zeMockMemAlloc(ze_mock_space_t space, uint64_t size, void** pptr);
ze_mock_result_t zeMockMemFree(void* ptr);
ze_mock_result_t zeMockCommandListCreate(uint32_t device, ze_mock_cmdlist_handle_t* phCommandList);
ze_mock_result_t zeMockCommandListAppendMemoryCopy(ze_mock_cmdlist_handle_t hCommandList, void* dstptr, const void* srcptr, uint64_t size, ze_mock_event_handle_t hSignalEvent, uint32_t numWaitEvents, ze_mock_event_handle_t* phWaitEvents);
ze_mock_result_t zeMockCommandListAppendLaunchKernel(ze_mock_cmdlist_handle_t hCommandList, const char* pKernelName, uint32_t groupCount, ze_mock_event_handle_t hSignalEvent);
ze_mock_result_t zeMockCommandListClose(ze_mock_cmdlist_handle_t hCommandList);
ze_mock_result_t zeMockCommandListExecute(ze_mock_cmdlist_handle_t hCommandList);
ze_mock_result_t zeMockCommandListReset(ze_mock_cmdlist_handle_t hCommandList);
ze_mock_result_t zeMockEventCreate(uint32_t device, ze_mock_event_handle_t* phEvent);
ze_mock_result_t zeMockEventDestroy(ze_mock_event_handle_t hEvent);
ze_mock_result_t zeMockEventHostSynchronize(ze_mock_event_handle_t hEvent, uint64_t timeout_ns);

#endif /* ZE_MOCK_H */
