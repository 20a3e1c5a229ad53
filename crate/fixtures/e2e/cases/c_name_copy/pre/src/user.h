#ifndef USER_H
#define USER_H
#include <stddef.h>

struct user {
    char name[32];
    int uid;
};

void copy_name(struct user *u, const char *src, size_t n);
void user_init(struct user *u);

#endif
