#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mitransfer.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, mit_last_error());                         \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(int argc, char **argv) {
    CHECK(argc == 2);
    MitSynthParams p = mit_synth_defaults();
    p.n_subjects = 2;
    p.trials_per_subject = 4;
    p.n_samples = 250;
    MitDataset *ds = NULL;
    CHECK(mit_dataset_synthesize(&p, &ds) == MIT_STATUS_OK);
    size_t subjects = 0, trials = 0;
    CHECK(mit_dataset_shape(ds, &subjects, NULL, NULL, &trials) == MIT_STATUS_OK);
    CHECK(subjects == 2 && trials == 8);
    CHECK(mit_dataset_save(ds, argv[1]) == MIT_STATUS_OK);
    mit_dataset_free(ds);

    MitModel *m = NULL;
    CHECK(mit_model_new(MIT_MODEL_KIND_EEG_NET, 16, 2000, 250.0, 0, &m) == MIT_STATUS_OK);
    size_t n = 0;
    CHECK(mit_model_n_params(m, &n) == MIT_STATUS_OK && n == 3834);
    float x[16 * 2000] = {0};
    float probs[2];
    CHECK(mit_model_predict_proba(m, x, 1, probs, 2) == MIT_STATUS_OK);
    CHECK(fabsf(probs[0] + probs[1] - 1.0f) < 1e-5f);
    mit_model_free(m);

    double w, pv;
    double flat[3] = {1.0, 2.0, 3.0};
    CHECK(mit_shapiro_wilk(flat, 3, &w, &pv) == MIT_STATUS_OK && fabs(w - 1.0) < 1e-9);
    CHECK(mit_shapiro_wilk(NULL, 3, &w, &pv) == MIT_STATUS_NULL_ARGUMENT);
    CHECK(strlen(mit_last_error()) > 0);
    printf("ok %s\n", mit_version());
    return 0;
}
