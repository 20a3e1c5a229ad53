package org.fixture.http;

public class HeaderParser {
    public int contentLength(String value) {
        int n = Integer.parseInt(value.trim());
        return n;
    }

    public byte[] body(String lengthHeader, byte[] raw) {
        int len = contentLength(lengthHeader);
        byte[] out = new byte[len];
        System.arraycopy(raw, 0, out, 0, len);
        return out;
    }
}
