#include <cstdio>
#include "pixeldiff/architecture.hpp"

int main() {
    using namespace pxd;
    // dev harness: print ladder counts vs published values
    struct Row { const char* name; double t1, t2, t3; };
    Row rows[] = {{"small", 672e6, 707e6, 217e6},
                  {"large", 1.3e9, 1.4e9, 351e6},
                  {"huge", 3.5e9, 3.6e9, 723e6},
                  {"xhuge", 7.7e9, 7.9e9, 1.2e9}};
    for (const auto& r : rows) {
        ModelPreset p = model_preset(r.name);
        double t1 = (double)count_params(p.shallow, "total");
        double t2 = (double)count_params(p.grown, "total");
        double t3 = (double)count_params(p.grown, "trainable");
        printf("%-6s shallow %12.0f (%+5.2f%%)  grown %12.0f (%+5.2f%%)  trainable %12.0f (%+5.2f%%)\n",
               r.name, t1, 100 * (t1 / r.t1 - 1), t2, 100 * (t2 / r.t2 - 1), t3,
               100 * (t3 / r.t3 - 1));
    }
    return 0;
}
