Calc_t f(Calc_t x) {
  return x * 2 + Calc_t(3.0);
}
