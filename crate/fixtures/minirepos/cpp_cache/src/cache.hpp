#pragma once

#include <string>
#include <vector>

namespace store {

struct Entry {
    std::string key;
    int value;
    int hits;
};

class LruCache {
public:
    explicit LruCache(int capacity);
    int get(const std::string &key);
    void put(const std::string &key, int value);
    int size() const { return count; }

private:
    int find(const std::string &key) const;
    void evict();
    std::vector<Entry> slots;
    int capacity;
    int count;
    long misses;
};

}
