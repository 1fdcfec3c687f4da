// Prints the bank map of a 32x64 bf16 tile under each layout and the
// conflict degree of the tensor-core access pattern, the quickest way to see
// why the swizzle family exists.

#include <cstdio>

#include "kittensim/layouts.hpp"

using namespace kittensim;

int main() {
    for (SwizzleMode mode : {SwizzleMode::NaiveRowMajor, SwizzleMode::Padded, SwizzleMode::RowXor,
                             SwizzleMode::SW32, SwizzleMode::SW64, SwizzleMode::SW128}) {
        const SharedLayout lay(32, 64, 2, mode);
        const ConflictReport rep = analyze_conflicts(lay, TensorCoreSegments{});
        std::printf("%-8s tensor-core access: %d-way conflicts, %d misaligned segments\n",
                    to_string(mode), rep.max_way, rep.misaligned_segments);
    }

    std::printf("\nbank of each 16-byte segment start, rows 0-7, sw64 vs naive:\n");
    const SharedLayout naive(32, 64, 2, SwizzleMode::NaiveRowMajor);
    const SharedLayout sw64(32, 64, 2, SwizzleMode::SW64);
    for (int r = 0; r < 8; ++r)
        std::printf("  row %d: naive bank %2d, sw64 bank %2d\n", r,
                    bank_of(element_offset(naive, r, 0)), bank_of(element_offset(sw64, r, 0)));
    return 0;
}
