package org.fixture.files;

public class PathUtil {
    public static String normalize(String name) {
        String s = name.replace('\\', '/');
        while (s.contains("//")) {
            s = s.replace("//", "/");
        }
        return s;
    }
}
