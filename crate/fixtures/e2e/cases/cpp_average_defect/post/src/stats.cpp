#include <vector>

double average(const std::vector<int> &xs)
{
    long sum = 0;
    for (int x : xs)
        sum += x;
    return static_cast<double>(sum) / xs.size();
}
