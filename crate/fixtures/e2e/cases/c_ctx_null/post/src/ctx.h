#ifndef CTX_H
#define CTX_H

struct ctx {
    int pos;
    int err;
};

void ctx_reset(struct ctx *c);
struct ctx *ctx_new(void);

#endif
