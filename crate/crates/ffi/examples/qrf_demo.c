/* Build: cargo build -p probstack-ffi --release
 *        cc qrf_demo.c -I../include -L../../../target/release -lprobstack_ffi -lm -lpthread -ldl */
#include <stdio.h>
#include "probstack.h"

int main(void) {
    double x[40], y[20];
    for (int i = 0; i < 20; i++) {
        x[2 * i] = i % 5;
        x[2 * i + 1] = (i * 3) % 7;
        y[i] = 10.0 + 2.0 * (i % 5) - (i * 3) % 7 + 0.1 * (i % 3);
    }
    PsQrfModel *model = NULL;
    if (ps_qrf_fit(x, 20, 2, y, 50, 2, 7, &model) != PS_STATUS_OK) {
        fprintf(stderr, "fit failed: %s\n", ps_last_error_message());
        return 1;
    }
    double query[2] = {2.0, 3.0};
    double q[PS_GRID_LEN];
    if (ps_qrf_predict(model, query, 2, q) != PS_STATUS_OK) {
        fprintf(stderr, "predict failed: %s\n", ps_last_error_message());
        ps_qrf_free(model);
        return 1;
    }
    printf("q05 %.3f  q50 %.3f  q95 %.3f\n", q[4], q[49], q[94]);

    PsStatus bad = ps_qrf_predict(model, query, 1, q);
    printf("wrong query length -> status %d: %s\n", bad, ps_last_error_message());
    ps_qrf_free(model);
    return 0;
}
