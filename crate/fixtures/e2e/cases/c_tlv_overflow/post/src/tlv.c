#include <string.h>
#include "tlv.h"

int tlv_copy(struct tlv *t, const unsigned char *buf, size_t len)
{
    size_t n;
    if (len < 2)
        return -1;
    n = buf[1];
    if (n > sizeof(t->value) || n + 2 > len)
        return -1;
    memcpy(t->value, buf + 2, n);
    t->type = buf[0];
    t->len = n;
    return 0;
}
