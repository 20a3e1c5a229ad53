package org.fixture.http;

public class HeaderParser {
    private static final int MAX_BODY = 1 << 20;

    public int contentLength(String value) {
        int n = Integer.parseInt(value.trim());
        if (n < 0 || n > MAX_BODY) {
            throw new IllegalArgumentException("bad content length");
        }
        return n;
    }

    public byte[] body(String lengthHeader, byte[] raw) {
        int len = contentLength(lengthHeader);
        byte[] out = new byte[len];
        System.arraycopy(raw, 0, out, 0, len);
        return out;
    }
}
