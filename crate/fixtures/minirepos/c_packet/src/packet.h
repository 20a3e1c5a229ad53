#ifndef PACKET_H
#define PACKET_H

#include <stdint.h>

typedef struct header {
    uint16_t len;
    uint8_t type;
    uint8_t flags;
} header_t;

typedef struct {
    header_t *hdr;
    uint8_t payload[64];
    int valid;
} packet_t;

struct stats {
    long parsed;
    long dropped;
};

int parse_packet(packet_t *pkt, const uint8_t *buf, int n);
int packet_checksum(const packet_t *pkt);

#endif
