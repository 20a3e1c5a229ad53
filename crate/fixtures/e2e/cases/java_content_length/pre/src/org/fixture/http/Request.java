package org.fixture.http;

public class Request {
    public byte[] read(HeaderParser p, String header, byte[] raw) {
        return p.body(header, raw);
    }
}
