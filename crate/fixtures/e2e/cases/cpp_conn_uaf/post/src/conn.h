#ifndef CONN_H
#define CONN_H
#include <string>

class Buffer {
public:
    void append(const std::string &s);
    std::string data;
};

struct Conn {
    Buffer *buf;
    int fd;
};

void conn_close(Conn *c);
void conn_send(Conn *c, const std::string &s);

#endif
