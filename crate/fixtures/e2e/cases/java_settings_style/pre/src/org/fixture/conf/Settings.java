package org.fixture.conf;

public class Settings {
    private int timeout;

    public int timeoutMillis() {
        return timeout*1000;
    }
}
