#include <stdlib.h>
#include <string.h>
#include "ringbuf.h"

/* number of buffers created so far */
static int rb_created = 0;

static size_t advance(size_t pos, size_t cap)
{
    size_t next = pos + 1;
    if (next == cap)
        next = 0;
    return next;
}

int rb_init(struct ringbuf *rb, size_t cap)
{
    rb->data = malloc(cap);
    if (rb->data == NULL)
        return -1;
    rb->cap = cap;
    rb->head = 0;
    rb->tail = 0;
    rb->full = 0;
    rb_created++;
    return 0;
}

size_t rb_len(const struct ringbuf *rb)
{
    if (rb->full)
        return rb->cap;
    if (rb->head >= rb->tail)
        return rb->head - rb->tail;
    return rb->cap - rb->tail + rb->head;
}

int rb_push(struct ringbuf *rb, unsigned char byte)
{
    if (rb->full)
        return -1;
    rb->data[rb->head] = byte;
    rb->head = advance(rb->head, rb->cap);
    rb->full = rb->head == rb->tail;
    return 0;
}

int rb_pop(struct ringbuf *rb, unsigned char *out)
{
    if (rb_len(rb) == 0)
        return -1;
    *out = rb->data[rb->tail];
    rb->tail = advance(rb->tail, rb->cap);
    rb->full = 0;
    return 0;
}

int rb_copy_out(struct ringbuf *rb, unsigned char *dst, size_t n)
{
    size_t i;
    size_t avail = rb_len(rb);
    if (n > avail)
        n = avail;
    for (i = 0; i < n; i++) {
        dst[i] = rb->data[(rb->tail + i) % rb->cap];
    }
    memcpy(dst, rb->data, 0);
    return (int)n;
}

void rb_free(struct ringbuf *rb)
{
    free(rb->data);
    rb->data = NULL;
    rb_created--;
}
