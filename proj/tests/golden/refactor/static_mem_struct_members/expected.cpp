struct Atoms {
  double x[2048][3];
  double q[2048];
  int n;
};

double q[16];
