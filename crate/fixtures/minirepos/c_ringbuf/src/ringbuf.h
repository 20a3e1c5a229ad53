#ifndef RINGBUF_H
#define RINGBUF_H

#include <stddef.h>

struct ringbuf {
    unsigned char *data;
    size_t cap;
    size_t head;
    size_t tail;
    int full;
};

int rb_init(struct ringbuf *rb, size_t cap);
size_t rb_len(const struct ringbuf *rb);
int rb_push(struct ringbuf *rb, unsigned char byte);
int rb_pop(struct ringbuf *rb, unsigned char *out);

#endif
