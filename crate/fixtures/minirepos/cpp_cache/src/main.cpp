#include <iostream>
#include "cache.hpp"

static int warm(store::LruCache &c, int n)
{
    int loaded = 0;
    for (int i = 0; i < n; i++) {
        c.put(std::to_string(i), i * i);
        loaded++;
    }
    return loaded;
}

int main()
{
    store::LruCache cache(4);
    int n = warm(cache, 6);
    int v = cache.get("5");
    std::cout << n << " " << v << " " << cache.size() << std::endl;
    return 0;
}
