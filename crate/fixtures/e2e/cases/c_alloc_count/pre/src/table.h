#ifndef TABLE_H
#define TABLE_H
#include <stdint.h>
#include <stdio.h>

struct rec {
    uint32_t id;
    uint32_t flags;
    char tag[24];
};

struct table {
    struct rec *rows;
    uint32_t count;
};

uint32_t read_u32(FILE *fp);
struct rec *alloc_records(uint32_t count);
struct table *load_table(FILE *fp);

#endif
