public class BufferSize {
    public static int total(int count, int size) {
        if (count < 0 || size < 0) {
            throw new IllegalArgumentException("negative size");
        }
        return Math.multiplyExact(count, size);
    }
}
