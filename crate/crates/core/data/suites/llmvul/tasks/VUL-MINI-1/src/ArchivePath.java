import java.io.File;
import java.io.IOException;

public class ArchivePath {
    public static File resolve(File destDir, String entryName) throws IOException {
        return new File(destDir, entryName);
    }
}
