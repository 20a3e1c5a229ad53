package org.fixture.files;

import java.io.File;

public class FileServer {
    private final File root;

    public FileServer(File root) {
        this.root = root;
    }

    public File resolve(String name) {
        String clean = PathUtil.normalize(name);
        if (clean.startsWith("/") || clean.contains("..")) {
            throw new IllegalArgumentException("path escapes root");
        }
        return new File(root, clean);
    }
}
