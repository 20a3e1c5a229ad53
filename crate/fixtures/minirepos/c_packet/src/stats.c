#include <stdio.h>
#include "packet.h"

extern struct stats g_stats;

double drop_ratio(void)
{
    long total = g_stats.parsed + g_stats.dropped;
    if (total == 0)
        return 0.0;
    return (double)g_stats.dropped / total;
}

void reset_stats(struct stats *s)
{
    s->parsed = 0;
    s->dropped = 0;
}

void print_stats(void)
{
    printf("parsed=%ld dropped=%ld ratio=%f\n", g_stats.parsed, g_stats.dropped, drop_ratio());
    reset_stats(&g_stats);
}
