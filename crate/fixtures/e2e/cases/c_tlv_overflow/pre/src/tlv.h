#ifndef TLV_H
#define TLV_H
#include <stddef.h>

struct tlv {
    unsigned char type;
    size_t len;
    unsigned char value[64];
};

int tlv_copy(struct tlv *t, const unsigned char *buf, size_t len);

#endif
