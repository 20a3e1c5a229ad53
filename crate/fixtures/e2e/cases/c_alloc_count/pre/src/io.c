#include "table.h"

uint32_t read_u32(FILE *fp)
{
    unsigned char b[4] = {0};
    fread(b, 1, 4, fp);
    return (uint32_t)b[0] | (uint32_t)b[1] << 8 | (uint32_t)b[2] << 16 | (uint32_t)b[3] << 24;
}
