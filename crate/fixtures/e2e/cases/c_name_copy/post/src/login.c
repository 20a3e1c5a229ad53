#include "user.h"
#include "wire.h"

int handle_login(struct user *u, const struct msg *m)
{
    user_init(u);
    copy_name(u, m->payload, m->payload_len);
    return 0;
}
