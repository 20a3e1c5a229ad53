#include <assert.h>
#include "../src/parse.h"

void test_parse_digit(void)
{
    assert(parse_digit('7') == 7);
    assert(parse_digit('x') == -1);
    assert(parse_digit('0') == 0);
}
