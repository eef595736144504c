/* Build: cargo build -p chainport-ffi --release
 *        cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *           target/release/libchainport_ffi.a -lm -lpthread -ldl -o smoke */
#include <stdio.h>
#include "chainport.h"

int main(void) {
    CpSpec *spec = NULL;
    CpTable *table = NULL;
    if (cp_spec_new(2, CP_FAMILY_TWO_WAY_VAA, CP_END_LINK_AUTO, CP_MODE_FULL, &spec) != CP_STATUS_OK ||
        cp_table_derive(spec, &table) != CP_STATUS_OK) {
        fprintf(stderr, "error: %s\n", cp_last_error());
        return 1;
    }
    double amps[8] = {0.6, 0.0, 0.0, 0.8, 1.0, 0.0, 0.0, 1.0};
    uint8_t d[2];
    CpTrialSummary s;
    if (cp_run_trial(spec, table, amps, 7, d, &s) != CP_STATUS_OK) {
        fprintf(stderr, "error: %s\n", cp_last_error());
        return 1;
    }
    printf("d = (%u, %u)  fidelity before %.6f  after %.12f\n", d[0], d[1], s.fidelity_before, s.fidelity_after);
    cp_table_free(table);
    cp_spec_free(spec);
    return 0;
}
