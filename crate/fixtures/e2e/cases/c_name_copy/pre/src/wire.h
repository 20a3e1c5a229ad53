#ifndef WIRE_H
#define WIRE_H
#include <stddef.h>

struct msg {
    const char *payload;
    size_t payload_len;
};

#endif
