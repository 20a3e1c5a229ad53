package org.fixture.conf;

public class Settings {
    private int timeout;

    /** Timeout in milliseconds; the stored value is in seconds. */
    public int timeoutMillis() {
        return timeout * 1000;
    }
}
