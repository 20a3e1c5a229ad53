#include <stdint.h>
#include <stdlib.h>
#include "table.h"

struct rec *alloc_records(uint32_t count)
{
    if (count > SIZE_MAX / sizeof(struct rec))
        return NULL;
    return malloc(count * sizeof(struct rec));
}

struct table *load_table(FILE *fp)
{
    struct table *t = malloc(sizeof(*t));
    uint32_t nrec = read_u32(fp);
    t->rows = alloc_records(nrec);
    t->count = nrec;
    for (uint32_t i = 0; i < nrec; i++)
        fread(&t->rows[i], sizeof(struct rec), 1, fp);
    return t;
}
