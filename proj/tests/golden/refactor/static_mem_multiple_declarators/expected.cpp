double a[8], b[8][4], c;
