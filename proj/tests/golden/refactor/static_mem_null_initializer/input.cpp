double *x = NULL;
double *y = nullptr;
