public class BufferSize {
    public static int total(int count, int size) {
        return count * size;
    }
}
