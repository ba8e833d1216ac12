void compute(int n) {
  LOOP_COMPUTE_A: for (int a = 0; a < n; a++)
    LOOP_COMPUTE_B: for (int b = 0; b < n; b++)
      LOOP_COMPUTE_C: for (int c = 0; c < n; c++)
        LOOP_COMPUTE_D: for (int d = 0; d < n; d++)
          work(a, b, c, d);
}
