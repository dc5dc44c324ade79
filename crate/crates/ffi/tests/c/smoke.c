#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "surfluid.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        SfStatus s_ = (call);                                              \
        if (s_ != SF_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,              \
                    sf_last_error_message());                              \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    SfSession *s = NULL;
    if (sf_session_open("/nonexistent/scene.json", 3, &s) == SF_STATUS_OK) return 3;
    if (sf_last_error_message() == NULL) return 4;

    CHECK(sf_session_open(argv[1], 3, &s));
    double hints[4] = {10.0, 12.0, 1.0, 0.0};
    CHECK(sf_session_set_hints(s, hints, 1));
    SfSimulateParams p = sf_simulate_defaults();
    p.frames = 2;
    p.warmup_steps = 2;
    CHECK(sf_session_simulate(s, &p));

    size_t w, h, n;
    CHECK(sf_session_dims(s, &w, &h, &n));
    float *flow = malloc(2 * w * h * sizeof(float));
    if (sf_session_motion(s, 0, flow, 1) != SF_STATUS_BUFFER_TOO_SMALL) return 5;
    CHECK(sf_session_motion(s, 0, flow, 2 * w * h));
    float dx = flow[2 * ((h / 2) * w + w / 2)];

    SfFrames *f = NULL;
    CHECK(sf_session_render(s, 0, 4, true, &f));
    unsigned char *rgb = malloc(3 * w * h);
    CHECK(sf_frames_copy_rgb8(f, 4, rgb, 3 * w * h));

    char *log = NULL;
    CHECK(sf_session_log_json(s, &log));
    printf("%zu %zu %zu %llu %zu %.3f %d\n", w, h, n,
           (unsigned long long)sf_session_revision(s), sf_frames_count(f), dx,
           strstr(log, "\"simulate\"") != NULL);

    sf_string_free(log);
    sf_frames_free(f);
    sf_session_free(s);
    free(rgb);
    free(flow);
    return 0;
}
