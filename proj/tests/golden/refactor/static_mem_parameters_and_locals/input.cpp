void compute(const double *in, double *out) {
  double *tmp = 0;
  for (int i = 0; i < 256; i++) {
    tmp[i] = in[i] * 2.0;
    out[i] = tmp[i];
  }
}
