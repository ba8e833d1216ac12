int LOOP_K_A = 0;

void k(int n) {
  LOOP_K_B: for (int i = 0; i < n; i++) LOOP_K_A += i;
  LOOP_K_C: for (int j = 0; j < n; j++) LOOP_K_A -= j;
}
