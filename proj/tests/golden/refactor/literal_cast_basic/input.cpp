void kernel(Calc_t *a, Calc_t x) {
  Calc_t y = 0.5 * x;
  a[3] = 0.5;
  a[0] = 1e-3 + 2.5f;
}
