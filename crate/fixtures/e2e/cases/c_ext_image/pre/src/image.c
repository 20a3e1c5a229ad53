#include <stddef.h>
#include <extcodec/decode.h>

int load_image(const unsigned char *data, size_t len, unsigned char *pixels)
{
    struct ext_header h;
    if (ext_decode(data, len, &h) != 0)
        return -1;
    for (size_t i = 0; i < h.width * h.height; i++)
        pixels[i] = data[h.offset + i];
    return 0;
}
