#pragma once

namespace geo {

struct Point {
    double x;
    double y;
};

class Shape {
public:
    virtual ~Shape() {}
    virtual double area() const = 0;
    int id;
};

class Rect : public Shape {
public:
    Rect(Point a, Point b) {
        origin = a;
        corner = b;
    }
    double area() const;
    double width() const { return corner.x - origin.x; }
    double height() const { return corner.y - origin.y; }
    Point origin;
    Point corner;
};

class Circle : public Shape {
public:
    Circle(Point c, double r) {
        center = c;
        radius = r;
    }
    double area() const;
    void grow(double by);
    Point center;
    double radius;
};

}
