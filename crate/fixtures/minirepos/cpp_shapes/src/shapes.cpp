#include "shapes.hpp"

namespace geo {

double Rect::area() const
{
    return width() * height();
}

double Circle::area() const
{
    double r2 = radius * radius;
    return 3.14159 * r2;
}

void Circle::grow(double by)
{
    radius += by;
    center.x -= by;
    center.y -= by;
}

Point midpoint(const Point &a, const Point &b)
{
    Point m;
    m.x = (a.x + b.x) / 2;
    m.y = (a.y + b.y) / 2;
    return m;
}

double total_area(Shape **shapes, int n)
{
    double sum = 0;
    for (int i = 0; i < n; i++) {
        sum += shapes[i]->area();
    }
    return sum;
}

void shift(Rect *r, double dx)
{
    r->origin.x += dx;
    r->corner.x += dx;
    r->id = 7;
}

}
