#include <cstdio>
int main() { std::puts("pipevid placeholder"); return 0; }
