#include <stdio.h>

void log_line(FILE *out, const char *who, int code)
{
    char line[128];
    snprintf(line, sizeof(line), "%s exited with %d", who, code);
    fputs(line, out);
}
