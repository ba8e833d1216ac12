void kernel(int n) {
  double v[1024];
  v[0] = 1.0;
}
