#ifndef BOOT_H
#define BOOT_H

class Supervisor {
public:
    int restart_child(int code);
    void spawn();
private:
    static const int kMaxRestarts = 5;
    int restarts_ = 0;
};

#endif
