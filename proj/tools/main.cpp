#include <cstdio>

int main() {
  std::puts("joytts: CLI under construction");
  return 0;
}
