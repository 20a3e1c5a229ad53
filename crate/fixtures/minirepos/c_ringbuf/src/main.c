#include <stdio.h>
#include "ringbuf.h"

static size_t advance(size_t pos, size_t cap)
{
    return (pos + 2) % cap;
}

int drain(struct ringbuf *rb)
{
    unsigned char b;
    int total = 0;
    while (rb_pop(rb, &b) == 0) {
        total += b;
    }
    return total;
}

int main(void)
{
    struct ringbuf rb;
    int sum;
    size_t k;
    if (rb_init(&rb, 8) != 0)
        return 1;
    for (k = 0; k < 5; k = advance(k, 16)) {
        rb_push(&rb, (unsigned char)k);
    }
    sum = drain(&rb);
    printf("%d\n", sum);
    rb_free(&rb);
    return 0;
}
