#include <string.h>
#include "packet.h"

struct stats g_stats;
int max_len = 64;

static int read_u16(const uint8_t *p)
{
    int hi = p[0];
    int lo = p[1];
    return (hi << 8) | lo;
}

static int valid_type(int type)
{
    switch (type) {
    case 1:
    case 2:
        return 1;
    default:
        return 0;
    }
}

int parse_packet(packet_t *pkt, const uint8_t *buf, int n)
{
    int len = read_u16(buf);
    pkt->valid = 0;
    if (len > max_len || len + 4 > n) {
        g_stats.dropped++;
        return -1;
    }
    pkt->hdr->len = len;
    pkt->hdr->type = buf[2];
    pkt->hdr->flags = buf[3];
    if (!valid_type(pkt->hdr->type)) {
        g_stats.dropped += 1;
        return -1;
    }
    memcpy(pkt->payload, buf + 4, len);
    pkt->valid = 1;
    g_stats.parsed++;
    return len;
}

int packet_checksum(const packet_t *pkt)
{
    int sum = 0;
    int i;
    for (i = 0; i < pkt->hdr->len; i++) {
        sum = (sum + pkt->payload[i]) & 0xff;
    }
    return sum;
}
