#include <stdlib.h>
#include "ctx.h"

void ctx_reset(struct ctx *c)
{
    if (c == NULL)
        return;
    c->pos = 0;
    c->err = 0;
}

struct ctx *ctx_new(void)
{
    struct ctx *c = calloc(1, sizeof(*c));
    if (c)
        ctx_reset(c);
    return c;
}
