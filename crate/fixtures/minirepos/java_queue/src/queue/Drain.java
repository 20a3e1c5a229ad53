package queue;

import java.util.ArrayList;
import java.util.List;

public class Drain {
    private int drained;

    public List<String> drainAll(BoundedQueue<String> q) {
        List<String> out = new ArrayList<>();
        String s = q.poll();
        while (s != null) {
            out.add(s);
            drained++;
            s = q.poll();
        }
        return out;
    }

    public static void main(String[] args) {
        BoundedQueue<String> q = new BoundedQueue<>(3);
        q.offer("a");
        q.offer("b");
        Drain d = new Drain();
        List<String> got = d.drainAll(q);
        System.out.println(got.size() + d.drained);
    }
}
