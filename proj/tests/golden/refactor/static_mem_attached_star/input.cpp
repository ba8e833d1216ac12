float* buf;
