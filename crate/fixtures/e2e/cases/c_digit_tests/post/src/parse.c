#include "parse.h"

int parse_digit(char ch)
{
    if (ch < '0' || ch > '9')
        return -1;
    return ch - '0';
}
