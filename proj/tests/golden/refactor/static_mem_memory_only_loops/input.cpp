int **nb;

void setup(int n) {
  nb = new int*[n];
  for (int i = 0; i < n; i++)
    nb[i] = new int[512];
}

void teardown(int n) {
  for (int i = 0; i < n; i++) {
    delete[] nb[i];
  }
  delete[] nb;
}
