#include "cache.hpp"

namespace store {

LruCache::LruCache(int cap)
{
    capacity = cap;
    count = 0;
    misses = 0;
    slots.resize(cap);
}

int LruCache::find(const std::string &key) const
{
    for (int i = 0; i < count; i++) {
        if (slots[i].key == key)
            return i;
    }
    return -1;
}

int LruCache::get(const std::string &key)
{
    int idx = find(key);
    if (idx < 0) {
        ++misses;
        return -1;
    }
    slots[idx].hits++;
    return slots[idx].value;
}

void LruCache::evict()
{
    int victim = 0;
    for (int i = 1; i < count; i++) {
        if (slots[i].hits < slots[victim].hits)
            victim = i;
    }
    slots[victim] = slots[count - 1];
    count--;
}

void LruCache::put(const std::string &key, int value)
{
    int idx = find(key);
    if (idx >= 0) {
        slots[idx].value = value;
        return;
    }
    if (count == this->capacity)
        evict();
    Entry e;
    e.key = key;
    e.value = value;
    e.hits = 0;
    slots[count] = e;
    this->count += 1;
}

}
