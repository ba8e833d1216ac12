#define MAXN 4096
double f[MAXN][3];
