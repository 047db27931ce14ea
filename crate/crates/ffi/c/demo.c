/* Minimal consumer of the C API: prints the phase sensitivity at the
 * reference operating point. Build against the static library, e.g.
 *   cc demo.c -I../include ../../../target/release/libwmsense_ffi.a -lm -lpthread -ldl
 */
#include <math.h>
#include <stdio.h>

#include "wmsense.h"

int main(void) {
    WmsSource *source = NULL;
    WmsGrid *grid = NULL;
    WmsScheme *scheme = NULL;
    double phi = 0.0, lambda0 = 0.0, s_phi = 0.0;
    const double theta = 50.8 * M_PI / 180.0;

    if (wms_tir_phase(1.75, 1.3305, theta, &phi) != WMS_STATUS_OK ||
        wms_source_measured_sld(&source) != WMS_STATUS_OK ||
        wms_grid_default(&grid) != WMS_STATUS_OK ||
        wms_source_mean_wavelength(source, &lambda0) != WMS_STATUS_OK ||
        wms_scheme_biased(2e-4, wms_bias_for_inverse_regime(2e-4, lambda0, phi), &scheme) != WMS_STATUS_OK ||
        wms_phase_sensitivity(scheme, phi, source, grid, &s_phi) != WMS_STATUS_OK) {
        fprintf(stderr, "error: %s\n", wms_last_error_message());
        return 1;
    }
    printf("wmsense %s: S_phi = %.1f nm/rad\n", wms_version(), s_phi);
    wms_scheme_free(scheme);
    wms_grid_free(grid);
    wms_source_free(source);
    return 0;
}
