#include <assert.h>
#include "../src/parse.h"

void test_parse_digit(void)
{
    assert(parse_digit('7') == 7);
}
