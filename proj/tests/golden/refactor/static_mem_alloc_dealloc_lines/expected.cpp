double f[2048];

void setup(int n) {
}

void teardown() {
}
