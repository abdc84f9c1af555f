import java.io.File;
import java.io.IOException;

public class ArchivePath {
    public static File resolve(File destDir, String entryName) throws IOException {
        File target = new File(destDir, entryName);
        String base = destDir.getCanonicalPath() + File.separator;
        if (!target.getCanonicalPath().startsWith(base)) {
            throw new IOException("entry outside target dir: " + entryName);
        }
        return target;
    }
}
