// Training and scoring allocate large short-lived tensors on every op. With
// glibc defaults those blocks are mmap'd and returned to the OS on free, so
// each reuse pays the mapping cost again; keeping them on the heap lets the
// allocator recycle pages. Roughly a 5x difference on forward passes.
#include <cstdlib>

#if defined(__GLIBC__)
#include <malloc.h>

namespace {
struct MallocTuning {
    MallocTuning() {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    }
};
const MallocTuning tuning;
}  // namespace
#endif
