#include "conn.h"

void on_hangup(Conn *c)
{
    conn_close(c);
}

void on_message(Conn *c, const std::string &text)
{
    conn_send(c, text);
}
