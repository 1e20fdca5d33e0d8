#include <cstdio>

int main() {
    std::puts("sigg: cli under construction");
    return 0;
}
