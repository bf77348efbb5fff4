#include <cstdio>

#include "godel/coding.hpp"
#include "godel/text.hpp"

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("godel: subcommands not wired up yet");
  return 2;
}
