import java.io.File;
import java.io.IOException;

public class ArchivePathTest {
    private static int passed = 0;
    private static int failed = 0;

    private static void check(boolean ok, String label) {
        if (ok) {
            passed++;
        } else {
            failed++;
            System.out.println("failed: " + label);
        }
    }

    public static void main(String[] args) throws Exception {
        File dest = new File("extract");
        check(ArchivePath.resolve(dest, "a/b.txt").getPath().endsWith("b.txt"), "plain entry");
        boolean rejected = false;
        try {
            ArchivePath.resolve(dest, "../../etc/passwd");
        } catch (IOException e) {
            rejected = true;
        }
        check(rejected, "traversal rejected");
        System.out.println("RESULT passed=" + passed + " failed=" + failed);
        System.exit(failed == 0 ? 0 : 1);
    }
}
