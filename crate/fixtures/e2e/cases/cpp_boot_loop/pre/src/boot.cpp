#include "boot.h"

int Supervisor::restart_child(int code)
{
    if (code != 0) {
        spawn();
        return 1;
    }
    return 0;
}

void Supervisor::spawn()
{
    restarts_++;
}
