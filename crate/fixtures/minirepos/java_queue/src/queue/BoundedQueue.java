package queue;

public class BoundedQueue<T> {
    static class Node<T> {
        T item;
        Node<T> next;

        Node(T item) {
            this.item = item;
        }
    }

    private Node<T> head;
    private Node<T> tail;
    private int size;
    private final int limit;

    public BoundedQueue(int limit) {
        this.limit = limit;
    }

    public boolean offer(T item) {
        if (size >= limit) {
            return false;
        }
        Node<T> n = new Node<>(item);
        if (tail == null) {
            head = n;
        } else {
            tail.next = n;
        }
        tail = n;
        size++;
        return true;
    }

    public T poll() {
        if (head == null) {
            return null;
        }
        T item = head.item;
        head = head.next;
        if (head == null) {
            tail = null;
        }
        --size;
        return item;
    }

    public int size() {
        return size;
    }

    public boolean isFull() {
        return size() == limit;
    }
}
