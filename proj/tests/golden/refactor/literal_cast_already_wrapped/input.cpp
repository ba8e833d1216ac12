void kernel(Calc_t &y) {
  y = Calc_t(0.5);
  y = static_cast<Calc_t>(0.25);
  y = (double)0.125;
  y = Calc_t(-1.5);
}
