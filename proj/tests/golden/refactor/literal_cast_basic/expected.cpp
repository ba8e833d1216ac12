void kernel(Calc_t *a, Calc_t x) {
  Calc_t y = Calc_t(0.5) * x;
  a[3] = Calc_t(0.5);
  a[0] = Calc_t(1e-3) + Calc_t(2.5f);
}
