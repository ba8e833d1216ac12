#include <cmath>
#include "pair.h"
#define MAXN 2048

double f[MAXN];
