int nb[2048][512];

void setup(int n) {
}

void teardown(int n) {
}
