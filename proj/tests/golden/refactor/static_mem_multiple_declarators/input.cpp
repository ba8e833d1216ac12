double *a, **b, c;
