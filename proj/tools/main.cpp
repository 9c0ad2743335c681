#include "odgn/cli.hpp"

#include <malloc.h>

int main(int argc, char** argv)
{
  // Serve the per-step temporaries from the heap rather than fresh mappings.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return odgn::run_cli(argc, argv);
}
