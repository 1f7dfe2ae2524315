#include <cstdio>

extern "C" int run_capi_checks(void);

int main() {
  const int failures = run_capi_checks();
  if (failures != 0) {
    std::fprintf(stderr, "%d C API check(s) failed\n", failures);
    return 1;
  }
  std::puts("all C API checks passed");
  return 0;
}
