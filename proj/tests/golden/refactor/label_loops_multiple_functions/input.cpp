static void helper(double *x) {
  for (int i = 0; i < 4; ++i) x[i] = 0;
}

void pair(double *x) {
  helper(x);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) x[i] += j;
  }
}
