#include <string.h>
#include "user.h"

void copy_name(struct user *u, const char *src, size_t n)
{
    if (n >= sizeof(u->name))
        n = sizeof(u->name) - 1;
    memcpy(u->name, src, n);
    u->name[n] = '\0';
}

void user_init(struct user *u)
{
    memset(u, 0, sizeof(*u));
}
