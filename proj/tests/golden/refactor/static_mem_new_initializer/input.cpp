void kernel(int n) {
  double *v = new double[n];
  v[0] = 1.0;
  delete[] v;
}
