double *f;

void setup(int n) {
  f = new double[n];
}

void teardown() {
  delete[] f;
  f = NULL;
}
