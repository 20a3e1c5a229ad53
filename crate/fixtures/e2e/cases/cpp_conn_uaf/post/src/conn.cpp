#include "conn.h"

void Buffer::append(const std::string &s)
{
    data += s;
}

void conn_close(Conn *c)
{
    delete c->buf;
    c->buf = nullptr;
    c->fd = -1;
}

void conn_send(Conn *c, const std::string &s)
{
    if (c->buf == nullptr)
        return;
    c->buf->append(s);
}
